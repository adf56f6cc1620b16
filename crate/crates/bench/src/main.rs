use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use manpg::problems::{build_fe_hamiltonian, gen_spca};
use manpg::RetractionKind;
use manpg_bench::{emit_csv, run_experiment, ExperimentSpec, ProblemKind, SolverKind, SpecOverrides};

#[derive(Parser)]
#[command(name = "manpg-bench", version, about = "Seeded ManPG benchmark sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write raw.csv and aggregate.csv.
    Run(RunArgs),
    /// Write a generated sparse PCA data matrix.
    GenSpca {
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the free-electron Hamiltonian on n nodes.
    FeHamiltonian {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML config; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<SolverKind>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol_scale: Option<f64>,
    #[arg(long)]
    retraction: Option<RetractionKind>,
    /// Write cpu_s as 0 so repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: RunArgs) -> Result<()> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_file(path)?,
        None => ExperimentSpec::default(),
    };
    spec.apply(SpecOverrides {
        problem: args.problem,
        n: args.n,
        r: args.r,
        mu: args.mu,
        instances: args.instances,
        solvers: args.solvers,
        seed: args.seed,
        out: args.out,
        max_iter: args.max_iter,
        tol_scale: args.tol_scale,
        retraction: args.retraction,
        timing: args.no_timing.then_some(false),
        threads: args.threads,
    });
    spec.validate()?;
    let records = run_experiment(&spec)?;
    let paths = emit_csv(&records, &spec.out)?;
    let failed = records.iter().filter(|r| r.agreement == manpg_bench::Agreement::Failed).count();
    println!(
        "{} runs ({} failed) -> {}, {}",
        records.len(),
        failed,
        paths.raw.display(),
        paths.aggregate.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::GenSpca { m, n, seed, out } => {
            gen_spca(m, n, seed).and_then(|a| manpg::matio::save_matrix(&a, &out)).map_err(Into::into)
        }
        Command::FeHamiltonian { n, out } => {
            build_fe_hamiltonian(n).and_then(|h| manpg::matio::save_matrix(&h, &out)).map_err(Into::into)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
