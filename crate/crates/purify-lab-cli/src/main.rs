//! purify-lab: seeded verification runs and divergence reports.
//!
//! Exit codes: 0 all checks passed, 1 a numeric check failed (reports are
//! still written), 2 bad arguments or malformed input, 3 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use purify_lab::Error;
use purify_lab_cli::config::{parse_alpha, resolve_seed, CommandKind, DivChoice, RunConfig};
use purify_lab_cli::run::run;

#[derive(Parser)]
#[command(
    name = "purify-lab",
    version,
    about = "Seeded numerical checks for the random purification channel and its divergence bounds",
    after_help = "Seed resolution: --seed, else PURIFY_LAB_SEED, else 1729. \
                  Reports are byte-identical for identical config and seed."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    /// Umegaki relative entropy.
    Umegaki,
    /// Sandwiched Renyi divergence of order --alpha.
    Sandwiched,
    /// Lower edge of the measured bracket.
    MeasuredLower,
    /// Two-sided measured bracket (divergence subcommand only).
    Measured,
}

impl From<KindArg> for DivChoice {
    fn from(kind: KindArg) -> Self {
        match kind {
            KindArg::Umegaki => DivChoice::Umegaki,
            KindArg::Sandwiched => DivChoice::Sandwiched,
            KindArg::MeasuredLower => DivChoice::MeasuredLower,
            KindArg::Measured => DivChoice::Measured,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the defining identities of the purification channel on seeded inputs.
    VerifyChannel {
        /// Local dimension of each copy.
        #[arg(long)]
        d: usize,
        /// Number of copies.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Pass threshold for every residual.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Seeded repetitions (seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Dense-matrix size budget.
        #[arg(long = "max-dim", default_value_t = purify_lab::haar::DEFAULT_MAX_DIM)]
        max_dim: usize,
        /// Write a JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Evaluate a divergence between two states read from disk.
    Divergence {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Order parameter; accepts a positive number or 'inf'.
        #[arg(long, value_parser = parse_alpha, default_value = "1")]
        alpha: f64,
        /// First argument, as a JSON operator file.
        #[arg(long)]
        rho: PathBuf,
        /// Reference state, as a JSON operator file.
        #[arg(long)]
        sigma: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check the weak quasi-concavity bound on random ensembles.
    Quasiconcavity {
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Ensemble size.
        #[arg(long, default_value_t = 4)]
        members: usize,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_parser = parse_alpha, default_value = "1")]
        alpha: f64,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Reduce iid mixtures to few atoms and recheck the divergence bound.
    Caratheodory {
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Copies in each iid power.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Atoms in the starting mixture.
        #[arg(long, default_value_t = 20)]
        members: usize,
        #[arg(long, value_enum, default_value_t = KindArg::Umegaki)]
        kind: KindArg,
        #[arg(long, value_parser = parse_alpha, default_value = "1")]
        alpha: f64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Scan the per-copy divergence gap against the single-system baseline.
    UhlmannScan {
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Largest copy count in the scan.
        #[arg(long, default_value_t = 3)]
        nmax: usize,
        #[arg(long, value_enum)]
        divergence: KindArg,
        #[arg(long, value_parser = parse_alpha, default_value = "1")]
        alpha: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Write scan rows as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check the measured lower bound against lifted per-copy values.
    MeasuredChain {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long, default_value_t = 3)]
        nmax: usize,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn base_config(command: CommandKind, seed: u64) -> RunConfig {
    RunConfig {
        command,
        d: 2,
        n: 1,
        alpha: 1.0,
        divergence: DivChoice::Umegaki,
        seed,
        tol: 1e-9,
        trials: 1,
        members: 1,
        max_dim: purify_lab::haar::DEFAULT_MAX_DIM,
        rho: None,
        sigma: None,
        csv: None,
        json: None,
    }
}

fn build_config(cmd: Cmd) -> Result<RunConfig, String> {
    match cmd {
        Cmd::VerifyChannel { d, n, seed, tol, trials, max_dim, json } => {
            let mut cfg = base_config(CommandKind::VerifyChannel, resolve_seed(seed)?);
            cfg.d = d;
            cfg.n = n;
            cfg.tol = tol;
            cfg.trials = trials;
            cfg.max_dim = max_dim;
            cfg.json = json;
            Ok(cfg)
        }
        Cmd::Divergence { kind, alpha, rho, sigma, json } => {
            let mut cfg = base_config(CommandKind::Divergence, resolve_seed(None)?);
            cfg.divergence = kind.into();
            cfg.alpha = alpha;
            cfg.rho = Some(rho);
            cfg.sigma = Some(sigma);
            cfg.json = json;
            Ok(cfg)
        }
        Cmd::Quasiconcavity { d, members, kind, alpha, trials, seed, json } => {
            let mut cfg = base_config(CommandKind::Quasiconcavity, resolve_seed(seed)?);
            cfg.d = d;
            cfg.members = members;
            cfg.divergence = kind.into();
            cfg.alpha = alpha;
            cfg.trials = trials;
            cfg.json = json;
            Ok(cfg)
        }
        Cmd::Caratheodory { d, n, members, kind, alpha, trials, seed, json } => {
            let mut cfg = base_config(CommandKind::Caratheodory, resolve_seed(seed)?);
            cfg.d = d;
            cfg.n = n;
            cfg.members = members;
            cfg.divergence = kind.into();
            cfg.alpha = alpha;
            cfg.trials = trials;
            cfg.json = json;
            Ok(cfg)
        }
        Cmd::UhlmannScan { d, nmax, divergence, alpha, seed, trials, csv, json } => {
            let mut cfg = base_config(CommandKind::UhlmannScan, resolve_seed(seed)?);
            cfg.d = d;
            cfg.n = nmax;
            cfg.divergence = divergence.into();
            cfg.alpha = alpha;
            cfg.trials = trials;
            cfg.csv = csv;
            cfg.json = json;
            Ok(cfg)
        }
        Cmd::MeasuredChain { d, alpha, nmax, trials, seed, json } => {
            let mut cfg = base_config(CommandKind::MeasuredChain, resolve_seed(seed)?);
            cfg.d = d;
            cfg.alpha = alpha;
            cfg.n = nmax;
            cfg.trials = trials;
            cfg.json = json;
            Ok(cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(cli.command) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(outcome) if outcome.pass => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
