//! The six subcommands. Sweeps fan grid points out to the worker pool and
//! write rows back in grid order, so thread count never changes the bytes.

use rayon::prelude::*;

use pml_core::{
    certify_bound, dp_epsilon, exact_pml_bound, min_noise_for_epsilon, simplified_pml_bound,
    trivial_bound, BoundKind, BoundResult64, BoundWitness, CalibrationResult64, PriorClass64,
};

use crate::config::{self, Cli, CommandName, Resolved, CALIBRATION_TOL_REL};
use crate::output::{self, fmt_e};
use crate::CliError;

const SWEEP_ALPHA_HEADER: &str = "alpha,exact_pml_nats,simplified_pml_nats,dp_nats,\
trivial_nats,exact_witness_rows,exact_witness_j_min,exact_witness_j_max,\
simplified_witness_j1,simplified_witness_j2";

const SWEEP_EPSILON_HEADER: &str =
    "epsilon,b_exact_pml,b_simplified_pml,b_dp,exact_monotone_verified,\
simplified_monotone_verified,error";

pub fn run(cli: Cli) -> Result<(), CliError> {
    init_worker_pool()?;
    let rc = config::resolve(cli)?;
    match rc.command {
        CommandName::Gen => cmd_gen(&rc),
        CommandName::Bound => cmd_bound(&rc),
        CommandName::Calibrate => cmd_calibrate(&rc),
        CommandName::SweepAlpha => cmd_sweep_alpha(&rc),
        CommandName::SweepEpsilon => cmd_sweep_epsilon(&rc),
        CommandName::Certify => cmd_certify(&rc),
    }
}

/// The optional PML_WORKERS variable sets the worker-pool size and nothing
/// else; results are identical for every thread count.
fn init_worker_pool() -> Result<(), CliError> {
    match std::env::var("PML_WORKERS") {
        Ok(val) => {
            let n: usize = val.parse().map_err(|_| {
                CliError::Usage(format!(
                    "PML_WORKERS must be a positive integer, got {val:?}"
                ))
            })?;
            if n == 0 {
                return Err(CliError::Usage(
                    "PML_WORKERS must be a positive integer, got 0".into(),
                ));
            }
            // Already-initialized is fine: the pool can only be set once.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn hash_and_meta(rc: &Resolved) -> (serde_json::Value, String) {
    let record = rc.config_record();
    let hash = output::config_hash(&record, rc.workload_bytes.as_deref());
    (record, hash)
}

fn cmd_gen(rc: &Resolved) -> Result<(), CliError> {
    let (_, hash) = hash_and_meta(rc);
    let w = &rc.workload;
    let mut text = output::meta_line(&hash, rc.workload_seed, rc.oracle_seed());
    text.push('\n');
    for l in 0..w.m() {
        let cells: Vec<String> = w.row(l).iter().map(|&v| fmt_e(v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    output::write_output(&rc.out, &text)
}

fn cmd_bound(rc: &Resolved) -> Result<(), CliError> {
    let (record, hash) = hash_and_meta(rc);
    let prior = match rc.alpha {
        Some(a) => Some(PriorClass64::new(a, rc.workload.k())?),
        None => None,
    };
    let mut results: Vec<BoundResult64> = Vec::new();
    for &kind in &rc.kinds {
        let result = match kind {
            BoundKind::ExactPml => exact_pml_bound(&rc.workload, rc.b, prior.as_ref().unwrap())?,
            BoundKind::SimplifiedPml => {
                simplified_pml_bound(&rc.workload, rc.b, prior.as_ref().unwrap())?
            }
            BoundKind::Dp => dp_epsilon(&rc.workload, rc.b)?,
            BoundKind::Trivial => trivial_bound(prior.as_ref().unwrap()),
        };
        results.push(result);
    }
    let meta = output::meta_value(&hash, rc.workload_seed, rc.oracle_seed());
    let results = serde_json::to_value(&results)
        .map_err(|e| CliError::Io(format!("cannot serialize results: {e}")))?;
    let doc = output::json_document(meta, record, results)?;
    output::write_output(&rc.out, &doc)
}

fn cmd_calibrate(rc: &Resolved) -> Result<(), CliError> {
    let (record, hash) = hash_and_meta(rc);
    let eps = rc.eps.unwrap();
    let prior = match rc.alpha {
        Some(a) => Some(PriorClass64::new(a, rc.workload.k())?),
        None => None,
    };
    let mut results: Vec<CalibrationResult64> = Vec::new();
    for &kind in &rc.kinds {
        let prior_arg = match kind {
            BoundKind::Dp => None,
            _ => prior.as_ref(),
        };
        results.push(min_noise_for_epsilon(
            &rc.workload,
            eps,
            prior_arg,
            kind,
            CALIBRATION_TOL_REL,
        )?);
    }
    let meta = output::meta_value(&hash, rc.workload_seed, rc.oracle_seed());
    let results = serde_json::to_value(&results)
        .map_err(|e| CliError::Io(format!("cannot serialize results: {e}")))?;
    let doc = output::json_document(meta, record, results)?;
    output::write_output(&rc.out, &doc)
}

fn cmd_sweep_alpha(rc: &Resolved) -> Result<(), CliError> {
    let (_, hash) = hash_and_meta(rc);
    let w = &rc.workload;
    let k = w.k();
    let values = rc.alpha_grid.as_ref().unwrap().values();

    let rows: Result<Vec<String>, pml_core::Error> = values
        .par_iter()
        .map(|&alpha| {
            let prior = PriorClass64::new(alpha, k)?;
            let exact = exact_pml_bound(w, rc.b, &prior)?;
            let simplified = simplified_pml_bound(w, rc.b, &prior)?;
            let dp = dp_epsilon(w, rc.b)?;
            let trivial = trivial_bound(&prior);
            let (rows_mask, j_min, j_max) = match exact.witness {
                BoundWitness::Subset { rows, j_min, j_max } => (rows, j_min, j_max),
                _ => unreachable!("exact bound always carries a subset witness"),
            };
            let (j1, j2) = match simplified.witness {
                BoundWitness::ColumnPair { j1, j2 } => (j1, j2),
                _ => unreachable!("simplified bound always carries a pair witness"),
            };
            Ok([
                fmt_e(alpha),
                fmt_e(exact.value),
                fmt_e(simplified.value),
                fmt_e(dp.value),
                fmt_e(trivial.value),
                rows_mask.to_string(),
                j_min.to_string(),
                j_max.to_string(),
                j1.to_string(),
                j2.to_string(),
            ]
            .join(","))
        })
        .collect();
    let rows = rows?;

    let mut text = output::meta_line(&hash, rc.workload_seed, rc.oracle_seed());
    text.push('\n');
    text.push_str(SWEEP_ALPHA_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    output::write_output(&rc.out, &text)
}

fn cmd_sweep_epsilon(rc: &Resolved) -> Result<(), CliError> {
    let (_, hash) = hash_and_meta(rc);
    let w = &rc.workload;
    let prior = PriorClass64::new(rc.alpha.unwrap(), w.k())?;
    let values = rc.eps_grid.as_ref().unwrap().values();

    // Solver failures are recorded in the row's error column; the sweep
    // itself keeps going.
    let rows: Vec<String> = values
        .par_iter()
        .map(|&eps| {
            let mut b_cells = Vec::with_capacity(3);
            let mut flag_cells = Vec::with_capacity(2);
            let mut errors = Vec::new();
            for kind in [BoundKind::ExactPml, BoundKind::SimplifiedPml] {
                match min_noise_for_epsilon(w, eps, Some(&prior), kind, CALIBRATION_TOL_REL) {
                    Ok(r) => {
                        b_cells.push(fmt_e(r.b_min));
                        flag_cells.push(r.monotone_verified.to_string());
                    }
                    Err(e) => {
                        b_cells.push(String::new());
                        flag_cells.push(String::new());
                        errors.push(format!("{}: {e}", kind.as_str()));
                    }
                }
            }
            match min_noise_for_epsilon(w, eps, None, BoundKind::Dp, CALIBRATION_TOL_REL) {
                Ok(r) => b_cells.push(fmt_e(r.b_min)),
                Err(e) => {
                    b_cells.push(String::new());
                    errors.push(format!("dp: {e}"));
                }
            }
            // Keep the CSV parsable: no commas or newlines inside the cell.
            let error_cell = errors.join("; ").replace(['\n', ','], ";");
            [
                fmt_e(eps),
                b_cells[0].clone(),
                b_cells[1].clone(),
                b_cells[2].clone(),
                flag_cells[0].clone(),
                flag_cells[1].clone(),
                error_cell,
            ]
            .join(",")
        })
        .collect();

    let mut text = output::meta_line(&hash, rc.workload_seed, rc.oracle_seed());
    text.push('\n');
    text.push_str(SWEEP_EPSILON_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    output::write_output(&rc.out, &text)
}

fn cmd_certify(rc: &Resolved) -> Result<(), CliError> {
    let (record, hash) = hash_and_meta(rc);
    let prior = PriorClass64::new(rc.alpha.unwrap(), rc.workload.k())?;
    let report = certify_bound(&rc.workload, rc.b, &prior, rc.n, rc.trials, rc.seed)?;
    let meta = output::meta_value(&hash, rc.workload_seed, rc.oracle_seed());
    let results = serde_json::to_value(report)
        .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
    let doc = output::json_document(meta, record, results)?;
    output::write_output(&rc.out, &doc)
}
