use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mstsp::aas::AasConfig;
use mstsp::harness::{cmd_affine_test, cmd_evaluate, cmd_oracle, cmd_solve, cmd_train, SolveMode, SolveOptions};
use mstsp::instances::DistanceConvention;
use mstsp::metrics::{DEFAULT_DELTA1, DEFAULT_DELTA2};
use mstsp::Error;

#[derive(Parser)]
#[command(name = "mstsp", version, about = "Train and run multi-solution TSP policies")]
struct Cli {
    /// Worker threads for the parallel parts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Real,
    Rounded,
}

impl From<Convention> for DistanceConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Real => DistanceConvention::Real,
            Convention::Rounded => DistanceConvention::Rounded,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Aas,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long, default_value_t = DEFAULT_DELTA1)]
    delta1: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA2)]
    delta2: f64,
    #[arg(long, value_enum, default_value_t = Convention::Real)]
    convention: Convention,
    #[arg(long, value_enum, default_value_t = Mode::Greedy)]
    mode: Mode,
    /// Baseline switching threshold for active search.
    #[arg(long, default_value_t = AasConfig::default().alpha)]
    alpha: f64,
    #[arg(long, default_value_t = AasConfig::default().t_max)]
    tmax: usize,
    #[arg(long, default_value_t = AasConfig::default().lr)]
    aas_lr: f64,
    /// Keep every distinct tour seen during active search.
    #[arg(long)]
    archive: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the x/y-swapped second pass.
    #[arg(long)]
    no_mirror: bool,
}

impl SolveArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            mode: match self.mode {
                Mode::Greedy => SolveMode::Greedy,
                Mode::Aas => SolveMode::Aas,
            },
            delta1: self.delta1,
            delta2: self.delta2,
            convention: self.convention.into(),
            aas: AasConfig {
                alpha: self.alpha,
                t_max: self.tmax,
                lr: self.aas_lr,
                archive: self.archive,
                ..AasConfig::default()
            },
            seed: self.seed,
            mirror: !self.no_mirror,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy from a `key = value` config file.
    Train {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Solve one instance and write its filtered solution set and metrics.
    Solve {
        checkpoint: PathBuf,
        instance: PathBuf,
        #[command(flatten)]
        args: SolveArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare greedy results on uniform instances before and after affine transforms.
    AffineTest {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every instance in a directory and write a run report.
    Evaluate {
        checkpoint: PathBuf,
        instance_dir: PathBuf,
        /// Directory holding `<instance stem>.gt` files.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[command(flatten)]
        args: SolveArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enumerate every optimal tour of a small instance.
    Oracle {
        instance: PathBuf,
        /// Absolute length tolerance (default: 1e-6 relative for real, 0 for rounded).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum, default_value_t = Convention::Real)]
        convention: Convention,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> mstsp::Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            quiet,
        } => {
            cmd_train(&config, seed, &out, |r| {
                if !quiet {
                    eprintln!(
                        "epoch {} tau {:.4} train {:.5} eval {:.5}",
                        r.epoch, r.tau, r.mean_train_len, r.mean_eval_len
                    );
                }
            })?;
        }
        Command::Solve {
            checkpoint,
            instance,
            args,
            out,
        } => {
            let report = cmd_solve(&checkpoint, &instance, &args.options(), &out)?;
            println!(
                "solutions {} best {} msqi {}",
                report.size, report.best_length, report.msqi
            );
        }
        Command::AffineTest {
            checkpoint,
            instances,
            n,
            seed,
            out,
        } => {
            let report = cmd_affine_test(&checkpoint, instances, n, seed, &out)?;
            print!("{}", report.to_csv());
        }
        Command::Evaluate {
            checkpoint,
            instance_dir,
            ground_truth,
            args,
            out,
        } => {
            let report = cmd_evaluate(
                &checkpoint,
                &instance_dir,
                ground_truth.as_deref(),
                &args.options(),
                &out,
            )?;
            print!("{}", report.to_csv());
        }
        Command::Oracle {
            instance,
            tol,
            convention,
            out,
        } => {
            let gt = cmd_oracle(&instance, tol, convention.into(), &out)?;
            println!("optimal {} tours {}", gt.optimal_length, gt.optima.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numeric() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}
