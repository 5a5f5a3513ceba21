use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wrgd::harness::{
    run_convergence, run_single, run_success_rate, run_sweep, run_validate, ExperimentSpec, MOverN,
    ResultTable, SpecOverrides,
};
use wrgd::oracle::AuditLevel;
use wrgd::solvers::{SolverKind, StepPolicy};
use wrgd::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_AUDIT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "wrgd",
    version,
    about = "Phase retrieval by weighted Riemannian gradient descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one seeded instance and print its trace as CSV.
    Solve(CommonArgs),
    /// Convergence curves over many trials.
    Converge(CommonArgs),
    /// Median iterations and time to threshold over an m/n grid.
    Sweep(CommonArgs),
    /// Success probability over an m/n grid.
    SuccessRate(CommonArgs),
    /// Run the dense oracle audits.
    Validate {
        #[arg(long, default_value = "fast")]
        level: String,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma list of ratios (`6`, `5/2`, `2.5`) or grids `10..30:2`.
    #[arg(long = "m-over-n")]
    m_over_n: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list from twrgd, trgd, twf.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    /// `exact` or `fixed:<alpha>`.
    #[arg(long)]
    step: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Stopping tolerance on the relative error.
    #[arg(long)]
    tol: Option<f64>,
    /// Relative error counted as success.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long = "power-iters")]
    power_iters: Option<usize>,
    /// Apply the truncation mask to TWF as well.
    #[arg(long = "truncate-twf")]
    truncate_twf: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Zero all wall-clock columns so outputs are byte-reproducible.
    #[arg(long)]
    deterministic: bool,
    /// Use n = 1000.
    #[arg(long = "full-scale")]
    full_scale: bool,
}

impl CommonArgs {
    fn overrides(&self) -> Result<SpecOverrides, Error> {
        let solvers = match &self.solver {
            Some(s) => Some(
                s.split(',')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(str::parse::<SolverKind>)
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        let n = if self.full_scale { Some(1000) } else { self.n };
        Ok(SpecOverrides {
            n,
            m_over_n: self
                .m_over_n
                .as_deref()
                .map(MOverN::parse_list)
                .transpose()?,
            trials: self.trials,
            seed: self.seed,
            solvers,
            tau0: self.tau0,
            tau1: self.tau1,
            tau2: self.tau2,
            step: self
                .step
                .as_deref()
                .map(str::parse::<StepPolicy>)
                .transpose()?,
            max_iters: self.max_iters,
            tol: self.tol,
            threshold: self.threshold,
            power_iters: self.power_iters,
            truncate_twf: self.truncate_twf.then_some(true),
            out: self.out.clone(),
            threads: self.threads,
            deterministic: self.deterministic.then_some(true),
        })
    }

    fn spec(&self, base: ExperimentSpec) -> Result<ExperimentSpec, Error> {
        let file = match &self.config {
            Some(path) => SpecOverrides::from_file(path)?,
            None => SpecOverrides::default(),
        };
        file.merged(self.overrides()?).apply(base)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Format(_) => EXIT_USAGE,
        Error::Numeric(_) | Error::DegenerateRetraction(_) | Error::Io { .. } => EXIT_NUMERIC,
    }
}

fn print_aggregates(table: &ResultTable) {
    println!("solver\tm/n\tsuccess_rate\tmedian_iters\tmedian_seconds");
    for a in &table.aggregates {
        println!(
            "{}\t{}\t{:.3}\t{}\t{:.4}",
            a.solver, a.m_over_n, a.success_rate, a.median_iters, a.median_seconds
        );
    }
}

fn all_solvers() -> ExperimentSpec {
    ExperimentSpec::with_solvers(&SolverKind::ALL)
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Solve(args) => {
            let spec = args.spec(ExperimentSpec {
                trials: 1,
                ..ExperimentSpec::default()
            })?;
            let (_, trace) = run_single(&spec)?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            trace
                .write_csv(&mut lock)
                .and_then(|_| lock.flush())
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })?;
            if let Some(dir) = &spec.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let path = dir.join("trace.csv");
                let file = std::fs::File::create(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                trace
                    .write_csv(file)
                    .map_err(|e| Error::Io { path, source: e })?;
            }
            eprintln!(
                "converged={} iters={} rel_mse={:e}",
                trace.converged,
                trace.iters,
                trace.final_rel_mse()
            );
            if let Some(reason) = &trace.failure {
                eprintln!("error: {reason}");
                return Ok(EXIT_NUMERIC);
            }
            Ok(0)
        }
        Command::Converge(args) => {
            let out = run_convergence(&args.spec(ExperimentSpec::default())?)?;
            print_aggregates(&out.table);
            Ok(0)
        }
        Command::Sweep(args) => {
            let base = ExperimentSpec {
                m_over_n: MOverN::integer_range(10, 30, 2)?,
                ..all_solvers()
            };
            print_aggregates(&run_sweep(&args.spec(base)?)?);
            Ok(0)
        }
        Command::SuccessRate(args) => {
            let base = ExperimentSpec {
                m_over_n: MOverN::integer_range(2, 10, 1)?,
                ..ExperimentSpec::default()
            };
            print_aggregates(&run_success_rate(&args.spec(base)?)?);
            Ok(0)
        }
        Command::Validate { level, seed, out } => {
            let level: AuditLevel = level.parse()?;
            let report = run_validate(level, seed, out.as_deref())?;
            for o in &report.outcomes {
                println!(
                    "{} {}: measured {:.3e}, bound {:.3e} ({})",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.measured,
                    o.bound,
                    o.detail
                );
            }
            Ok(if report.passed() { 0 } else { EXIT_AUDIT })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
