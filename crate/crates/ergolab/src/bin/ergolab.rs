use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ergolab::config;
use ergolab::Error;

#[derive(Parser)]
#[command(name = "ergolab", version, about = "MCMC ergodicity laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// artifact root; results land in <out-dir>/<experiment>/<label>/
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// dotted-path config override, e.g. --set kernel.eps=0.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a single chain and dump the trajectory
    Simulate(RunArgs),
    /// Grid-operator TV decay curve and polynomial rate fit
    TvRate(RunArgs),
    /// Polynomial drift condition for the guided walk
    DriftCheck(RunArgs),
    /// Decoupling probability of the coupled walks
    Coupling(RunArgs),
    /// Quadrature acceptance probabilities
    Acceptance(RunArgs),
    /// Mean displacement exponent from Monte Carlo replicates
    Displacement(RunArgs),
    /// Counterexample kernel audit (acceptance, drift, QVV, gap)
    CounterexampleAudit(RunArgs),
    /// Reachability vs target-mass audit for polynomial tails
    LemmaA2(RunArgs),
    /// Core hitting time comparison, random walk vs guided walk
    HittingTime(RunArgs),
}

impl Cmd {
    fn unpack(&self) -> (&'static str, &RunArgs) {
        match self {
            Cmd::Simulate(a) => ("simulate", a),
            Cmd::TvRate(a) => ("tv-rate", a),
            Cmd::DriftCheck(a) => ("drift-check", a),
            Cmd::Coupling(a) => ("coupling", a),
            Cmd::Acceptance(a) => ("acceptance", a),
            Cmd::Displacement(a) => ("displacement", a),
            Cmd::CounterexampleAudit(a) => ("counterexample-audit", a),
            Cmd::LemmaA2(a) => ("lemma-a2", a),
            Cmd::HittingTime(a) => ("hitting-time", a),
        }
    }
}

fn real_main() -> Result<(), Error> {
    let cli = Cli::parse();
    let (kind, args) = cli.cmd.unpack();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::usage(format!("thread pool: {e}")))?;
    }
    let record = config::run(&args.config, Some(kind), args.seed, &args.out_dir, &args.set)?;
    println!("{}", record.display());
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ergolab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
