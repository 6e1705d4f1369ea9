use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gph::experiments::{cmd_hierarchy, cmd_ladder, cmd_oracle, cmd_symbolic, exit_code, RunConfig};
use gph::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gph",
    version,
    about = "Conserved operators of the cubic GP hierarchy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one wavefunction and check the conserved ladder.
    Ladder(RunArgs),
    /// Evolve an ensemble and compare Tr W_n^j gamma^(k) with averaged I_n.
    Hierarchy(RunArgs),
    /// Print W_n^j, optionally comparing it with a parsed file.
    Symbolic {
        #[arg(short, long, default_value_t = 3)]
        n: u32,
        #[arg(short, long, default_value_t = 1)]
        j: u32,
        /// File holding an expression to compare after normalization.
        #[arg(long, value_name = "FILE")]
        parse: Option<PathBuf>,
    },
    /// Compare dense and separable evaluation on a coarse grid.
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply to anything missing.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    half_length: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<i32>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Ladder or hierarchy maximum index, or oracle maximum order.
    #[arg(long)]
    n_max: Option<u32>,
    /// Oracle particle number.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ensemble JSON file.
    #[arg(long, value_name = "PATH")]
    ensemble: Option<PathBuf>,
    /// Report directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self, command: &Command) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let oracle = matches!(command, Command::Oracle(_));
        if let Some(v) = self.n_points {
            if oracle {
                cfg.oracle.n_points = v;
            } else {
                cfg.grid.n_points = v;
            }
        }
        if let Some(v) = self.half_length {
            if oracle {
                cfg.oracle.half_length = v;
            } else {
                cfg.grid.half_length = v;
            }
        }
        if let Some(v) = self.n_max {
            match command {
                Command::Ladder(_) => cfg.ladder.n_max = v,
                Command::Hierarchy(_) => cfg.hierarchy.n_max = v,
                _ => cfg.oracle.n_max = v,
            }
        }
        if let Some(v) = self.dt {
            cfg.evolve.dt = v;
        }
        if let Some(v) = self.t_final {
            cfg.evolve.t_final = v;
        }
        if let Some(v) = self.kappa {
            cfg.evolve.kappa = v;
        }
        if let Some(v) = self.record_every {
            cfg.evolve.record_every = v;
        }
        if let Some(v) = self.k {
            cfg.oracle.k = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(p) = &self.ensemble {
            cfg.ensemble = Some(gph::experiments::EnsembleSource::Path(p.clone()));
            cfg.base_dir = None;
        }
        if let Some(p) = &self.out {
            cfg.output.dir = p.clone();
        }
        Ok(cfg)
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("GPH_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Config(format!("GPH_THREADS = {raw:?} is not a positive integer"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: &Cli, out: &mut dyn Write) -> Result<gph::experiments::Verdict> {
    configure_threads()?;
    match &cli.command {
        Command::Ladder(a) => cmd_ladder(&a.config(&cli.command)?, out),
        Command::Hierarchy(a) => cmd_hierarchy(&a.config(&cli.command)?, out),
        Command::Oracle(a) => cmd_oracle(&a.config(&cli.command)?, out),
        Command::Symbolic { n, j, parse } => {
            let src = match parse {
                Some(p) => Some(
                    std::fs::read_to_string(p)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                ),
                None => None,
            };
            cmd_symbolic(*n, *j, src.as_deref(), out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = run(&cli, &mut out);
    let code = exit_code(&result);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(code as u8)
}
