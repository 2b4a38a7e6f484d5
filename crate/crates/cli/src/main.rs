use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

mod commands;
mod output;

/// Numerical checks for derivatives, Taylor remainders and spectral shift
/// functionals of commuting matrix tuples.
///
/// Exit status: 0 when every in-hypothesis check passes, 1 when a check
/// fails, 2 on usage or configuration errors.
#[derive(Debug, Parser)]
#[command(name = "mvssm", version)]
struct Cli {
    /// Worker threads for draw-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one verification suite, or all of them.
    Verify(VerifyArgs),
    /// Tabulate the measure moments of a derivative term.
    Moments(MomentsArgs),
    /// Sweep the trace estimate over random ensembles.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Matrix dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Number of commuting variables.
    #[arg(long)]
    nvars: Option<usize>,
    /// Scale of the perturbation `B − A`.
    #[arg(long)]
    v_scale: Option<f64>,
    /// Report path (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// divdiff, derivatives, remainder, estimates, tracefla, reduction or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    m_min: Option<u32>,
    #[arg(long)]
    m_max: Option<u32>,
    /// jointly-diagonal, circulant or self-adjoint-diagonal (default: rotate per draw).
    #[arg(long)]
    ensemble: Option<String>,
    /// Overrides each suite's tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[command(flatten)]
    common: Common,
    /// Derivative term, e.g. "1^2,3^1".
    #[arg(long)]
    term: Option<String>,
    /// Expected total order of the term.
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    ensemble: Option<String>,
    /// Largest exponent per variable.
    #[arg(long)]
    max_degree: Option<u32>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    m_min: Option<u32>,
    #[arg(long)]
    m_max: Option<u32>,
    /// Ensemble to sweep; repeat for several (default: all three).
    #[arg(long)]
    ensemble: Vec<String>,
    /// Out-of-hypothesis probe: non-commuting or non-normal; repeatable.
    #[arg(long)]
    adversarial: Vec<String>,
    /// Largest number of distinct coordinates per term.
    #[arg(long)]
    max_k: Option<usize>,
    /// Also sweep a general trace for m > 2 (reported as unbacked).
    #[arg(long)]
    general_trace: bool,
    /// Per-case telemetry: term, m, t, ratio.
    #[arg(long)]
    max_ratio_csv: Option<PathBuf>,
}

/// Why a run did not end cleanly.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Check(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Check(_) => 1,
        }
    }
}

impl From<mvssm_core::Error> for Failure {
    fn from(e: mvssm_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
}

pub fn parse<T: std::str::FromStr<Err = mvssm_core::Error>>(s: &str) -> Result<T, Failure> {
    s.parse().map_err(Failure::from)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Verify(a) => commands::verify(a),
        Command::Moments(a) => commands::moments(a),
        Command::Sweep(a) => commands::sweep(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Check(msg) => eprintln!("check failed: {msg}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn failures_map_to_stable_exit_codes() {
        assert_eq!(Failure::Usage(String::new()).exit_code(), 2);
        assert_eq!(Failure::Check(String::new()).exit_code(), 1);
    }
}
