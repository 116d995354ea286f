//! `bias-lab`: run bias probes, training sweeps and baselines, writing CSV
//! files; or run the self-check suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bias_lab::sweep::{self, output, ExperimentConfig, ModelChoice, OUT_DIR_ENV};
use bias_lab::toy::Mode;
use bias_lab::{verify, Error};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

const USAGE_ERROR: u8 = 1;
const VERIFY_FAILED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "bias-lab", version, about = "Distributional bias experiments for bivariate causal direction learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Entropy difference H(X1) - H(X2) over an epsilon grid (bias_h.csv).
    BiasH(SweepArgs),
    /// Marginal shift difference over a lambda grid (bias_s.csv, case_ratios.csv, scatter_*.csv).
    BiasS(SweepArgs),
    /// Train the marginal or conditional model over a grid (runs.csv, trajectories.csv).
    Train(SweepArgs),
    /// Meta-transfer baseline over a grid (meta.csv).
    BaselineMeta(SweepArgs),
    /// ENCO baseline over a grid (enco.csv).
    BaselineEnco(SweepArgs),
    /// Run gradient checks, the shift-ordering check and the case-ratio oracle.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// TOML config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to $BIAS_LAB_OUT_DIR, then ./results.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated epsilon values.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Comma-separated lambda values.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Runs per grid point (models per epsilon for bias-h, chains per lambda for bias-s).
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batches_per_intervention: Option<usize>,
    /// Observational batches before the first intervention.
    #[arg(long)]
    warmup: Option<usize>,
    /// observational | interventional
    #[arg(long)]
    mode: Option<Mode>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// mm | cm (train only)
    #[arg(long)]
    model: Option<ModelChoice>,
}

impl SweepArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.base_seed = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = &self.epsilon {
            cfg.epsilon = Some(v.clone());
        }
        if let Some(v) = &self.lambda {
            cfg.lambda = Some(v.clone());
        }
        if let Some(v) = self.runs {
            cfg.n_runs = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batches_per_intervention {
            cfg.batches_per_intervention = v;
        }
        if let Some(v) = self.warmup {
            cfg.warmup_batches = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    fn jobs(&self) -> Result<usize, Error> {
        match self.jobs {
            Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run_sweep(command: &Command, args: &SweepArgs) -> Result<(), Error> {
    let cfg = args.config()?;
    let jobs = args.jobs()?;
    let dir = args.out_dir();
    let dir: &Path = &dir;
    if args.model.is_some() && !matches!(command, Command::Train(_)) {
        return Err(Error::Config("--model only applies to train".into()));
    }
    let paths = match command {
        Command::BiasH(_) => output::write_bias_h(dir, &sweep::run_bias_h(&cfg, jobs)?)?,
        Command::BiasS(_) => output::write_bias_s(dir, &sweep::run_bias_s(&cfg, jobs)?)?,
        Command::Train(_) => {
            let kind = cfg
                .model
                .toy_kind()
                .ok_or_else(|| Error::Config(format!("train needs model mm or cm, got {}", cfg.model)))?;
            output::write_train(dir, &sweep::run_train(&cfg, kind, jobs)?)?
        }
        Command::BaselineMeta(_) => output::write_meta(dir, &sweep::run_meta_sweep(&cfg, jobs)?)?,
        Command::BaselineEnco(_) => output::write_enco(dir, &sweep::run_enco_sweep(&cfg, jobs)?)?,
        Command::Verify { .. } => unreachable!("verify is not a sweep"),
    };
    report(&paths);
    Ok(())
}

fn run_verify(seed: u64) -> Result<bool, Error> {
    let report = verify::run(seed)?;
    println!("DPI violations: {}", report.dpi_violations);
    for c in &report.checks {
        println!(
            "{}: {:.3e} (limit {:.0e}) {}",
            c.name,
            c.value,
            c.limit,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE_ERROR),
            };
        }
    };
    let outcome = match &cli.command {
        Command::Verify { seed } => run_verify(*seed).map(|ok| if ok { ExitCode::SUCCESS } else { ExitCode::from(VERIFY_FAILED) }),
        Command::BiasH(a)
        | Command::BiasS(a)
        | Command::Train(a)
        | Command::BaselineMeta(a)
        | Command::BaselineEnco(a) => run_sweep(&cli.command, a).map(|_| ExitCode::SUCCESS),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(USAGE_ERROR)
    })
}
