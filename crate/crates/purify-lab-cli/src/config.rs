//! Resolved run configuration shared by every subcommand.
//!
//! The command-line layer parses flags into a [`RunConfig`]; everything
//! downstream (the run dispatcher, report emitters, golden tests) works from
//! this one struct so a run is reproducible from its config alone.

use std::path::PathBuf;

/// Seed used when neither `--seed` nor `PURIFY_LAB_SEED` is given.
///
/// Fixed so that bare invocations are reproducible across machines and
/// documented here so reports can be regenerated byte for byte.
pub const DEFAULT_SEED: u64 = 1729;

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "PURIFY_LAB_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    VerifyChannel,
    Divergence,
    Quasiconcavity,
    Caratheodory,
    UhlmannScan,
    MeasuredChain,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::VerifyChannel => "verify-channel",
            CommandKind::Divergence => "divergence",
            CommandKind::Quasiconcavity => "quasiconcavity",
            CommandKind::Caratheodory => "caratheodory",
            CommandKind::UhlmannScan => "uhlmann-scan",
            CommandKind::MeasuredChain => "measured-chain",
        }
    }
}

/// Divergence selector as it appears on the command line.
///
/// `Measured` asks for the two-sided bracket; `MeasuredLower` is the bracket's
/// lower edge used as a divergence in its own right.  Each subcommand accepts
/// the subset that makes sense for it and rejects the rest with a usage error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DivChoice {
    Umegaki,
    Sandwiched,
    MeasuredLower,
    Measured,
}

impl DivChoice {
    pub fn name(self) -> &'static str {
        match self {
            DivChoice::Umegaki => "umegaki",
            DivChoice::Sandwiched => "sandwiched",
            DivChoice::MeasuredLower => "measured-lower",
            DivChoice::Measured => "measured",
        }
    }
}

/// Fully resolved parameters for one run.
///
/// `n` doubles as the copy count (verify-channel, caratheodory) or the scan
/// ceiling (uhlmann-scan, measured-chain) depending on `command`.  Fields a
/// command does not use keep their defaults and are ignored.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: CommandKind,
    pub d: usize,
    pub n: usize,
    pub alpha: f64,
    pub divergence: DivChoice,
    pub seed: u64,
    pub tol: f64,
    pub trials: usize,
    pub members: usize,
    pub max_dim: usize,
    pub rho: Option<PathBuf>,
    pub sigma: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

/// Parse an order parameter, accepting `inf` for the operator-norm limit.
pub fn parse_alpha(text: &str) -> Result<f64, String> {
    if text == "inf" {
        return Ok(f64::INFINITY);
    }
    let value: f64 = text
        .parse()
        .map_err(|_| format!("expected a number or 'inf', got '{text}'"))?;
    if !value.is_finite() || value <= 0.0 {
        return Err(format!("alpha must be positive or 'inf', got '{text}'"));
    }
    Ok(value)
}

/// Seed resolution order: explicit flag, then [`SEED_ENV`], then [`DEFAULT_SEED`].
///
/// A present but malformed environment value is a configuration error, not
/// something to silently fall through.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, String> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| format!("{SEED_ENV} must be an unsigned integer, got '{text}'")),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_SEED),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(format!("{SEED_ENV} is not valid unicode"))
        }
    }
}
