use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stochbloch::config::{ExperimentConfig, Overrides};
use stochbloch::correlation::Method;
use stochbloch::experiment::{run_task, Progress, Task};
use stochbloch::Result;

/// Stochastic Bloch-vector spectra of a driven two-level emitter.
#[derive(Debug, Parser)]
#[command(name = "stochbloch", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Steady state, cumulants, drift and noise factors.
    Steady(Common),
    /// Two-time correlations C_ij(τ) for every selected method.
    Correlate(Common),
    /// Incoherent spectrum at the base parameters (sweep ignored).
    Spectrum(Common),
    /// Spectral maps over the configured sweep axis.
    Sweep(Common),
    /// Propagated-field spectrum from the 1D FDTD solver.
    Fdtd(Common),
    /// Parse and check the configuration, then exit.
    Validate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Random seed; overrides `seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "STOCHBLOCH_WORKERS")]
    workers: Option<usize>,
    /// Comma-separated subset of sto,qrt,grn.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let overrides = Overrides {
            seed: self.seed,
            output_dir: self.out.clone(),
            methods: self.methods.clone(),
        };
        ExperimentConfig::load(&self.config, &overrides)
    }

    fn workers(&self) -> usize {
        self.workers
            .filter(|&n| n > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

fn run(cli: Cli) -> Result<()> {
    let (task, common) = match &cli.command {
        Command::Steady(c) => (Some(Task::Steady), c),
        Command::Correlate(c) => (Some(Task::Correlate), c),
        Command::Spectrum(c) => (Some(Task::Spectrum), c),
        Command::Sweep(c) => (Some(Task::Sweep), c),
        Command::Fdtd(c) => (Some(Task::Fdtd), c),
        Command::Validate(c) => (None, c),
    };
    let cfg = common.load()?;
    let workers = common.workers();
    print!("{}", cfg.table());
    println!("{:<27} = {workers}", "workers");
    println!();

    let Some(task) = task else {
        println!("config ok, sha256 {}", cfg.content_hash());
        return Ok(());
    };
    let (tx, rx) = std::sync::mpsc::channel::<Progress>();
    let reporter = std::thread::spawn(move || {
        for (done, p) in rx.iter().enumerate() {
            let status = if p.ok { "ok" } else { "failed" };
            eprintln!("[{}/{}] point {} = {} {status}", done + 1, p.total, p.index, p.value);
        }
    });
    let output = run_task(&cfg, task, workers, Some(tx));
    let _ = reporter.join();
    let output = output?;
    print!("{}", output.summary);
    for p in output.files.write(&cfg.output_dir, task.as_str(), &cfg)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
