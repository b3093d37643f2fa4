//! Subcommand execution.
//!
//! Each runner derives its randomness from the resolved seed plus the trial
//! index, prints a short per-trial line, optionally writes a CSV or JSON
//! report, and returns whether every check in the run passed.  Reports are
//! written before the pass verdict is returned, so a failing run still leaves
//! its evidence on disk.

use purify_lab::convexity::{
    definetti_check, iid_span_dim, quasiconc_check, sym_projector_rank, DivKind, Ensemble,
};
use purify_lab::divergence::{measured_bracket, sandwiched, umegaki, DivergenceValue};
use purify_lab::matfile::read_state;
use purify_lab::purifier::PurificationChannel;
use purify_lab::sample::{random_density, random_prob_vec, random_smoothed_density};
use purify_lab::tensor::tensor_power;
use purify_lab::uhlmann::{gap_scan, measured_chain_check, random_extension, GAP_TOL};
use purify_lab::{DensityState, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{CommandKind, DivChoice, RunConfig};
use crate::report::{emit_csv, emit_json, jnum, sig12, GapRow};

/// Mixing weight toward the maximally mixed state for generated reference
/// states.  Keeps their spectra bounded away from the support clip so gap and
/// bracket values stay finite and well conditioned.
const REFERENCE_SMOOTHING: f64 = 0.1;

pub struct RunOutcome {
    pub pass: bool,
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let pass = match cfg.command {
        CommandKind::VerifyChannel => run_verify(cfg)?,
        CommandKind::Divergence => run_divergence(cfg)?,
        CommandKind::Quasiconcavity => run_quasiconcavity(cfg)?,
        CommandKind::Caratheodory => run_caratheodory(cfg)?,
        CommandKind::UhlmannScan => run_uhlmann_scan(cfg)?,
        CommandKind::MeasuredChain => run_measured_chain(cfg)?,
    };
    println!("{}: {}", cfg.command.name(), verdict(pass));
    Ok(RunOutcome { pass })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64))
}

/// Map a CLI divergence choice onto the library's quasi-concavity kinds.
fn div_kind(choice: DivChoice) -> Result<DivKind> {
    match choice {
        DivChoice::Umegaki => Ok(DivKind::Umegaki),
        DivChoice::Sandwiched => Ok(DivKind::Sandwiched),
        DivChoice::MeasuredLower => Ok(DivKind::MeasuredLower),
        DivChoice::Measured => Err(Error::Usage(
            "the two-sided measured bracket is only available through the divergence subcommand"
                .into(),
        )),
    }
}

fn run_verify(cfg: &RunConfig) -> Result<bool> {
    let channel = PurificationChannel::with_limit(cfg.d, cfg.n, cfg.max_dim)?;
    let mut results = Vec::new();
    let mut pass = true;
    for trial in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let rep = channel.verify(seed, cfg.tol)?;
        println!(
            "seed {seed}: gap_iid {} gap_symmetric {} cp_min_eig {} tp_residual {} [{}]",
            sig12(rep.gap_iid),
            sig12(rep.gap_symmetric),
            sig12(rep.cp_min_eig),
            sig12(rep.tp_residual),
            verdict(rep.pass),
        );
        pass &= rep.pass;
        results.push(json!({
            "seed": rep.seed,
            "gap_iid": jnum(rep.gap_iid),
            "gap_symmetric": jnum(rep.gap_symmetric),
            "cp_min_eig": jnum(rep.cp_min_eig),
            "tp_residual": jnum(rep.tp_residual),
            "pass": rep.pass,
        }));
    }
    if let Some(path) = &cfg.json {
        let report = json!({
            "command": cfg.command.name(),
            "d": cfg.d,
            "n": cfg.n,
            "seed": cfg.seed,
            "tol": jnum(cfg.tol),
            "trials": cfg.trials,
            "results": results,
            "pass": pass,
        });
        emit_json(&report, path)?;
    }
    Ok(pass)
}

fn divergence_json(value: &DivergenceValue) -> Value {
    json!({
        "value": jnum(value.value),
        "support_ok": value.support_ok,
        "support_leak": jnum(value.support_leak),
        "margin_warning": value.margin_warning,
    })
}

fn run_divergence(cfg: &RunConfig) -> Result<bool> {
    let rho_path = cfg
        .rho
        .as_ref()
        .ok_or_else(|| Error::Usage("divergence needs --rho".into()))?;
    let sigma_path = cfg
        .sigma
        .as_ref()
        .ok_or_else(|| Error::Usage("divergence needs --sigma".into()))?;
    let rho = read_state(rho_path)?;
    let sigma = read_state(sigma_path)?;
    let mut report = json!({
        "command": cfg.command.name(),
        "kind": cfg.divergence.name(),
        "alpha": jnum(cfg.alpha),
        "rho": rho_path.display().to_string(),
        "sigma": sigma_path.display().to_string(),
    });
    match cfg.divergence {
        DivChoice::Umegaki => {
            let value = umegaki(&rho, &sigma)?;
            println!("value {}", sig12(value.value));
            if value.margin_warning {
                println!("note: reference spectrum is close to the support clip");
            }
            report["result"] = divergence_json(&value);
        }
        DivChoice::Sandwiched => {
            let value = sandwiched(&rho, &sigma, cfg.alpha)?;
            println!("value {}", sig12(value.value));
            if value.margin_warning {
                println!("note: reference spectrum is close to the support clip");
            }
            report["result"] = divergence_json(&value);
        }
        DivChoice::Measured => {
            let bracket = measured_bracket(&rho, &sigma, cfg.alpha)?;
            println!(
                "lower {} pinching {} upper {}",
                sig12(bracket.lower),
                sig12(bracket.pinching_value),
                sig12(bracket.upper),
            );
            report["result"] = json!({
                "lower": jnum(bracket.lower),
                "pinching_value": jnum(bracket.pinching_value),
                "upper": jnum(bracket.upper),
                "eta_alpha": jnum(bracket.eta_alpha),
                "s_sigma": bracket.s_sigma,
            });
        }
        DivChoice::MeasuredLower => {
            let bracket = measured_bracket(&rho, &sigma, cfg.alpha)?;
            println!("value {}", sig12(bracket.lower));
            report["result"] = json!({
                "value": jnum(bracket.lower),
                "eta_alpha": jnum(bracket.eta_alpha),
                "s_sigma": bracket.s_sigma,
            });
        }
    }
    if let Some(path) = &cfg.json {
        emit_json(&report, path)?;
    }
    Ok(true)
}

fn run_quasiconcavity(cfg: &RunConfig) -> Result<bool> {
    let kind = div_kind(cfg.divergence)?;
    if cfg.members < 1 {
        return Err(Error::Usage("quasiconcavity needs --members >= 1".into()));
    }
    let mut rows = Vec::new();
    let mut pass = true;
    let mut min_margin = f64::INFINITY;
    for trial in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let mut rng = trial_rng(cfg.seed, trial);
        let weights = random_prob_vec(cfg.members, &mut rng);
        let members = weights
            .into_iter()
            .map(|w| (w, random_density(&[cfg.d], &mut rng)))
            .collect();
        let ens = Ensemble::new(members)?;
        let sigma = random_smoothed_density(&[cfg.d], REFERENCE_SMOOTHING, &mut rng);
        let rep = quasiconc_check(kind, cfg.alpha, &ens, &sigma)?;
        pass &= rep.pass();
        min_margin = min_margin.min(rep.margin);
        rows.push(json!({
            "trial": trial,
            "seed": seed,
            "mixture_value": jnum(rep.mixture_value),
            "min_member_value": jnum(rep.min_member_value),
            "slack_bound": jnum(rep.slack_bound),
            "margin": jnum(rep.margin),
            "n_members": rep.n_members,
        }));
    }
    println!(
        "{} trials, min margin {} [{}]",
        cfg.trials,
        sig12(min_margin),
        verdict(pass),
    );
    if let Some(path) = &cfg.json {
        let report = json!({
            "command": cfg.command.name(),
            "kind": cfg.divergence.name(),
            "alpha": jnum(cfg.alpha),
            "d": cfg.d,
            "members": cfg.members,
            "seed": cfg.seed,
            "trials": cfg.trials,
            "min_margin": jnum(min_margin),
            "results": rows,
            "pass": pass,
        });
        emit_json(&report, path)?;
    }
    Ok(pass)
}

fn run_caratheodory(cfg: &RunConfig) -> Result<bool> {
    let kind = div_kind(cfg.divergence)?;
    let rank = sym_projector_rank(cfg.d, cfg.n)?;
    let mut span_rng = trial_rng(cfg.seed, usize::MAX);
    let span = iid_span_dim(cfg.d, cfg.n, 2 * rank + 4, &mut span_rng)?;
    let dims_match = span == rank;
    println!("invariant dimension {rank}, iid span {span}");
    let mut rows = Vec::new();
    let mut pass = dims_match;
    for trial in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let mut rng = trial_rng(cfg.seed, trial);
        let weights = random_prob_vec(cfg.members, &mut rng);
        let members: Result<Vec<_>> = weights
            .into_iter()
            .map(|w| {
                let base = random_density(&[cfg.d], &mut rng);
                Ok((w, DensityState::new(tensor_power(base.op(), cfg.n)?)?))
            })
            .collect();
        let ens = Ensemble::new(members?)?;
        let sigma_base = random_smoothed_density(&[cfg.d], REFERENCE_SMOOTHING, &mut rng);
        let sigma_sym = DensityState::new(tensor_power(sigma_base.op(), cfg.n)?)?;
        let rep = definetti_check(&ens, &sigma_sym, kind, cfg.alpha)?;
        let within_budget = rep.n_members <= rank + 1;
        pass &= rep.pass() && within_budget;
        println!(
            "trial {trial}: {} -> {} members, margin {} [{}]",
            cfg.members,
            rep.n_members,
            sig12(rep.margin),
            verdict(rep.pass() && within_budget),
        );
        rows.push(json!({
            "trial": trial,
            "seed": seed,
            "survivors": rep.n_members,
            "mixture_value": jnum(rep.mixture_value),
            "min_member_value": jnum(rep.min_member_value),
            "slack_bound": jnum(rep.slack_bound),
            "margin": jnum(rep.margin),
        }));
    }
    if let Some(path) = &cfg.json {
        let report = json!({
            "command": cfg.command.name(),
            "kind": cfg.divergence.name(),
            "alpha": jnum(cfg.alpha),
            "d": cfg.d,
            "n": cfg.n,
            "members": cfg.members,
            "seed": cfg.seed,
            "trials": cfg.trials,
            "invariant_dim": rank,
            "iid_span_dim": span,
            "dims_match": dims_match,
            "results": rows,
            "pass": pass,
        });
        emit_json(&report, path)?;
    }
    Ok(pass)
}

/// Draw one scan instance: a random marginal, a random extension of it on a
/// d-dimensional second system, and a smoothed random reference state.
fn scan_instance(d: usize, rng: &mut ChaCha8Rng) -> Result<(DensityState, DensityState)> {
    let rho_a = random_density(&[d], rng);
    let rho_ab = random_extension(&rho_a, d, rng)?;
    let sigma = random_smoothed_density(&[d], REFERENCE_SMOOTHING, rng);
    Ok((rho_ab, sigma))
}

fn run_uhlmann_scan(cfg: &RunConfig) -> Result<bool> {
    let kind = match cfg.divergence {
        DivChoice::Umegaki => DivKind::Umegaki,
        DivChoice::Sandwiched => DivKind::Sandwiched,
        other => {
            return Err(Error::Usage(format!(
                "uhlmann-scan supports umegaki and sandwiched, got {}",
                other.name()
            )))
        }
    };
    // The per-copy column reports the order actually evaluated.
    let alpha_column = match kind {
        DivKind::Umegaki => 1.0,
        _ => cfg.alpha,
    };
    let mut rows = Vec::new();
    let mut pass = true;
    let mut shrinking = 0usize;
    for trial in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let mut rng = trial_rng(cfg.seed, trial);
        let (rho_ab, sigma) = scan_instance(cfg.d, &mut rng)?;
        let records = gap_scan(&rho_ab, &sigma, cfg.n, kind, cfg.alpha)?;
        if records.len() > 1 && records[records.len() - 1].gap < records[0].gap {
            shrinking += 1;
        }
        for rec in &records {
            pass &= rec.gap >= -GAP_TOL;
            println!(
                "trial {trial} n {}: per_copy {} baseline {} gap {}",
                rec.n,
                sig12(rec.per_copy_value),
                sig12(rec.baseline),
                sig12(rec.gap),
            );
            rows.push(GapRow {
                n: rec.n,
                divergence: cfg.divergence.name().to_string(),
                alpha: alpha_column,
                per_copy_value: rec.per_copy_value,
                baseline: rec.baseline,
                gap: rec.gap,
                seed,
            });
        }
    }
    println!("gap shrinks from n=1 to n={} in {shrinking}/{} trials", cfg.n, cfg.trials);
    if let Some(path) = &cfg.csv {
        emit_csv(&rows, path)?;
    }
    if let Some(path) = &cfg.json {
        let json_rows: Vec<Value> = rows
            .iter()
            .map(|row| {
                json!({
                    "n": row.n,
                    "divergence": row.divergence,
                    "alpha": jnum(row.alpha),
                    "per_copy_value": jnum(row.per_copy_value),
                    "baseline": jnum(row.baseline),
                    "gap": jnum(row.gap),
                    "seed": row.seed,
                })
            })
            .collect();
        let report = json!({
            "command": cfg.command.name(),
            "divergence": cfg.divergence.name(),
            "alpha": jnum(alpha_column),
            "d": cfg.d,
            "n_max": cfg.n,
            "seed": cfg.seed,
            "trials": cfg.trials,
            "shrinking_trials": shrinking,
            "rows": json_rows,
            "pass": pass,
        });
        emit_json(&report, path)?;
    }
    Ok(pass)
}

fn run_measured_chain(cfg: &RunConfig) -> Result<bool> {
    let mut rows = Vec::new();
    let mut pass = true;
    for trial in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let mut rng = trial_rng(cfg.seed, trial);
        let (rho_ab, sigma) = scan_instance(cfg.d, &mut rng)?;
        let rep = measured_chain_check(&rho_ab, &sigma, cfg.alpha, cfg.n)?;
        pass &= rep.chain_ok;
        println!(
            "trial {trial}: lower {} pinching {} upper {} lifted {} [{}]",
            sig12(rep.base_lower),
            sig12(rep.base_pinching),
            sig12(rep.base_upper),
            sig12(rep.lifted_upper),
            verdict(rep.chain_ok),
        );
        let per_copy: Vec<Value> = rep.per_copy.iter().map(|&v| jnum(v)).collect();
        rows.push(json!({
            "trial": trial,
            "seed": seed,
            "base_lower": jnum(rep.base_lower),
            "base_pinching": jnum(rep.base_pinching),
            "base_upper": jnum(rep.base_upper),
            "lifted_upper": jnum(rep.lifted_upper),
            "per_copy": per_copy,
            "chain_ok": rep.chain_ok,
        }));
    }
    if let Some(path) = &cfg.json {
        let report = json!({
            "command": cfg.command.name(),
            "alpha": jnum(cfg.alpha),
            "d": cfg.d,
            "n_max": cfg.n,
            "seed": cfg.seed,
            "trials": cfg.trials,
            "results": rows,
            "pass": pass,
        });
        emit_json(&report, path)?;
    }
    Ok(pass)
}
