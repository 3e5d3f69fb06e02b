//! Command-line harness: train / evaluate / sweep / verify / report.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure,
//! 3 verification failure.

use aabigan::cli::{self, EvalSplit, RunConfig, SweepAxis};
use aabigan::error::Error;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "aabigan",
    about = "Anomaly-aware bidirectional GAN: training, evaluation and theory verification",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; omit to start from built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Print the fully resolved config and exit.
    #[arg(long)]
    print_config: bool,

    /// Override: output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override: collected-anomaly ratio gamma_l.
    #[arg(long)]
    gamma_l: Option<f64>,

    /// Override: pollution ratio gamma_p.
    #[arg(long)]
    gamma_p: Option<f64>,

    /// Override: scenario and training seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override: confusion target c of the (a, b, c) scheme.
    #[arg(long)]
    c: Option<f64>,

    /// Override: training epochs.
    #[arg(long)]
    epochs: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::example(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(v) = self.gamma_l {
            if v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "scenario.gamma_l must be >= 0, got {v}"
                )));
            }
            cfg.scenario.gamma_l = v;
        }
        if let Some(v) = self.gamma_p {
            if v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "scenario.gamma_p must be >= 0, got {v}"
                )));
            }
            cfg.scenario.gamma_p = v;
        }
        if let Some(s) = self.seed {
            cfg.scenario.seed = s;
            cfg.train.seed = s;
        }
        if let Some(c) = self.c {
            cfg.train.scheme =
                aabigan::TargetScheme::new(cfg.train.scheme.a, cfg.train.scheme.b, c)?;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoints, history and metadata to the run
    /// directory.
    Train(ConfigArgs),

    /// Evaluate a trained run: criterion selection on validation, AUROC on
    /// the chosen split, score CSV dump.
    Evaluate {
        /// Run directory produced by `train`.
        run_dir: PathBuf,
        /// Split to score: val or test.
        #[arg(long, default_value = "test")]
        split: String,
    },

    /// Cross-product sweep over scenario/scheme axes with per-group
    /// aggregation. Completed cells are skipped on resume.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Axes like gamma_l=0,0.01 gamma_p=0,0.1 k_l=1,2 c=0.25,0.75
        /// seed=1,2,3 or the bare word class_pairs.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
    },

    /// Numerically verify the convergence theory on discrete instances.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },

    /// Tabulate finished runs (and optionally plot reconstruction-error
    /// boxplots).
    Report {
        /// Run directories containing result.json.
        run_dirs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Emit SVG boxplots of normal / seen / novel reconstruction errors.
        #[arg(long)]
        plot: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; anything else is usage.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidInput(_) | Error::Parse { .. } => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            if args.print_config {
                print!("{}", cfg.to_toml());
                return Ok(ExitCode::SUCCESS);
            }
            let dir = cli::cmd_train(&cfg)?;
            println!("run directory: {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { run_dir, split } => {
            let split: EvalSplit = split.parse()?;
            let result = cli::cmd_evaluate(&run_dir, split)?;
            println!(
                "{}: AUROC {:.4} using {} (seed {})",
                result.dataset, result.auroc, result.criterion, result.seed
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, axes } => {
            let cfg = config.resolve()?;
            if config.print_config {
                print!("{}", cfg.to_toml());
                return Ok(ExitCode::SUCCESS);
            }
            let axes = axes
                .iter()
                .map(|a| SweepAxis::parse(a))
                .collect::<Result<Vec<_>, _>>()?;
            let summary = cli::cmd_sweep(&cfg, &axes)?;
            println!(
                "sweep: {} cells ({} completed, {} resumed, {} failed)",
                summary.cells, summary.completed, summary.skipped, summary.failed
            );
            if summary.failed > 0 {
                eprintln!("some cells failed; see failures.json in the sweep directory");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed, json } => {
            let report = cli::cmd_verify(seed, json.as_deref())?;
            for check in &report.checks {
                let mark = if check.passed { "PASS" } else { "FAIL" };
                println!("[{mark}] {}: {}", check.name, check.detail);
            }
            if report.all_passed() {
                println!("all {} checks passed (seed {})", report.checks.len(), seed);
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }
        Command::Report {
            run_dirs,
            out,
            plot,
        } => {
            let groups = cli::cmd_report(&run_dirs, &out, plot)?;
            println!(
                "report over {} group(s) written to {}",
                groups.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
