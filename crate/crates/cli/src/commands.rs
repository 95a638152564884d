//! Subcommand bodies.
//!
//! Each command returns the files it wants written; [`execute`] writes them
//! in order, then the manifest.

use std::path::Path;
use std::sync::Arc;

use mhscale_core::cylinder;
use mhscale_core::estimators::{
    acceptance_rate, delta_h_stats, esjd_first_coord, estimate_s2, ks_critical_1pct, ks_statistic, pool_replicas,
    EstimateWithError,
};
use mhscale_core::lattice::Window;
use mhscale_core::model::InteractionModel;
use mhscale_core::oracle::{detailed_balance_check, gaussian_s2_exact, quad_acceptance};
use mhscale_core::rng::derive_seed;
use mhscale_core::sampler::{init_state, run_chain, ProposalSpec, Recording, RunOptions, StepRecord};
use mhscale_core::scaling::{
    c_mc_oracle, c_theoretical, estimate_s2_reference, exact_grad_sq_mean, mosco_m2_check, normal_cdf, sweep_n,
    sweep_tau, window_for, GradSqSource, RunPlan,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CommandKind, ExperimentConfig, BATTERY};
use crate::manifest::{unix_now, write_atomic, RunManifest, MANIFEST_NAME};
use crate::output::{self, CheckRow, EstimatorRow, TrajectoryRow};
use crate::CliError;

/// Files and verdict of one command.
#[derive(Debug, Default)]
struct Outcome {
    files: Vec<(String, Vec<u8>)>,
    summary: Value,
    failure: Option<String>,
}

impl Outcome {
    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        self.files.push((name.to_string(), output::to_csv(rows)?));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) {
        let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
        text.push('\n');
        self.files.push((name.to_string(), text.into_bytes()));
    }
}

/// What a finished command reports back.
#[derive(Debug, Clone)]
pub struct Report {
    pub manifest: RunManifest,
    pub summary: Value,
    /// Set when a check battery did not pass.
    pub failure: Option<String>,
}

fn rt(e: mhscale_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Validates `config`, runs `kind` and writes its outputs and manifest into
/// `out_dir`.
pub fn execute(kind: CommandKind, config: &ExperimentConfig, out_dir: &Path) -> Result<Report, CliError> {
    config.validate_for(kind)?;
    let started_at = unix_now();
    let clock = std::time::Instant::now();
    let outcome = match kind {
        CommandKind::Sample => sample(config),
        CommandKind::SweepTau => sweep_tau_cmd(config),
        CommandKind::SweepN => sweep_n_cmd(config),
        CommandKind::EstimateS => estimate_s(config),
        CommandKind::DirichletCheck => dirichlet_check(config),
        CommandKind::CltCheck => clt_check(config),
        CommandKind::OracleCheck => oracle_check(config),
    }?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    let files = outcome
        .files
        .iter()
        .map(|(name, bytes)| write_atomic(out_dir, name, bytes))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = RunManifest {
        command: kind.name().to_string(),
        config: config.clone(),
        config_hash: config.content_hash(),
        seed: config.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: unix_now(),
        wall_time: clock.elapsed().as_secs_f64(),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(out_dir, MANIFEST_NAME, text.as_bytes())?;
    Ok(Report {
        manifest,
        summary: outcome.summary,
        failure: outcome.failure,
    })
}

fn est_json(e: &EstimateWithError) -> Value {
    json!({"value": e.value, "std_error": e.std_error, "n_samples": e.n_samples})
}

/// `s` from the config, the Gaussian oracle, or a reference run, in that
/// order of preference.
fn resolve_s(
    config: &ExperimentConfig,
    model: &InteractionModel,
    window: &Arc<Window>,
    plan: &RunPlan,
) -> Result<(f64, &'static str), CliError> {
    if let Some(s) = config.run.s_hat {
        return Ok((s, "config"));
    }
    if model.is_quadratic() {
        if let Ok(s2) = gaussian_s2_exact(model, window) {
            return Ok((s2.sqrt(), "exact"));
        }
    }
    let est = estimate_s2_reference(model, window, plan).map_err(rt)?;
    if est.value > 0.0 {
        Ok((est.value.sqrt(), "estimated"))
    } else {
        Err(CliError::Runtime("estimated s^2 is not positive".into()))
    }
}

struct Setup {
    model: InteractionModel,
    window: Arc<Window>,
    plan: RunPlan,
}

fn setup(config: &ExperimentConfig) -> Result<Setup, CliError> {
    let model = config.build_model()?;
    let window = config.build_window(&model)?;
    let init = config.init_mode(&model, &window)?;
    Ok(Setup {
        plan: config.plan(init),
        model,
        window,
    })
}

/// Full step records of `plan.replicas` chains at `tau`.
fn replica_records(s: &Setup, tau: f64) -> Result<Vec<Vec<StepRecord>>, CliError> {
    let n = s.window.len();
    (0..s.plan.replicas as u64)
        .into_par_iter()
        .map(|chain| {
            let (start, _) = init_state(&s.model, &s.window, &s.plan.init, s.plan.seed, chain)?;
            let spec = ProposalSpec::new(tau, n, s.plan.increments)?;
            Ok(run_chain(
                &s.model,
                start,
                spec,
                s.plan.steps,
                s.plan.seed,
                chain,
                &RunOptions::default(),
            )?
            .records)
        })
        .collect::<mhscale_core::Result<Vec<_>>>()
        .map_err(rt)
}

fn sample(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let s = setup(config)?;
    let tau = config.tau()?;
    let n = s.window.len();
    let records = replica_records(&s, tau)?;
    let per_chain = records
        .iter()
        .map(|r| Ok((acceptance_rate(r)?, esjd_first_coord(r, n)?, delta_h_stats(r)?)))
        .collect::<mhscale_core::Result<Vec<_>>>()
        .map_err(rt)?;
    let pool = |f: &dyn Fn(usize) -> EstimateWithError| {
        pool_replicas(&(0..per_chain.len()).map(f).collect::<Vec<_>>()).map_err(rt)
    };
    let acc = pool(&|i| per_chain[i].0)?;
    let esjd = pool(&|i| per_chain[i].1)?;
    let dh_mean = pool(&|i| per_chain[i].2.mean)?;
    let dh_var = pool(&|i| per_chain[i].2.variance)?;
    let hash = config.content_hash();
    let trajectory: Vec<TrajectoryRow> = records[0]
        .iter()
        .enumerate()
        .step_by(config.run.thinning)
        .map(|(t, r)| TrajectoryRow {
            t: t as u64,
            delta_h: r.delta_h,
            accepted: r.accepted,
            jump_sq_first_coord: r.jump_sq_first_coord,
        })
        .collect();
    let mut out = Outcome::default();
    out.csv("trajectory.csv", &trajectory)?;
    out.csv(
        "estimators.csv",
        &[
            EstimatorRow::new("acceptance", &acc, &hash),
            EstimatorRow::new("esjd", &esjd, &hash),
            EstimatorRow::new("delta_h_mean", &dh_mean, &hash),
            EstimatorRow::new("delta_h_var", &dh_var, &hash),
        ],
    )?;
    out.summary = json!({
        "n": n,
        "tau": tau,
        "replicas": config.run.replicas,
        "steps": config.run.steps,
        "acceptance": est_json(&acc),
        "esjd": est_json(&esjd),
        "delta_h_mean": est_json(&dh_mean),
        "delta_h_var": est_json(&dh_var),
    });
    out.json("summary.json", &out.summary.clone());
    Ok(out)
}

fn sweep_tau_cmd(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let s = setup(config)?;
    let grid = config.run.tau_grid.as_deref().expect("validated");
    let (s_hat, source) = resolve_s(config, &s.model, &s.window, &s.plan)?;
    let curve = sweep_tau(&s.model, &s.window, grid, &s.plan, Some(s_hat)).map_err(rt)?;
    let mut out = Outcome::default();
    out.csv("scaling_curve.csv", &output::scaling_rows(&curve))?;
    out.summary = json!({
        "n": s.window.len(),
        "s_hat": s_hat,
        "s_hat_source": source,
        "argmax_esjd": curve.argmax_esjd(),
        "acceptance_nonincreasing_2se": curve.acceptance_nonincreasing(2.0),
    });
    out.json("summary.json", &out.summary.clone());
    Ok(out)
}

/// Model and the window of the largest size in `n_list`, for `s`.
fn largest_window(config: &ExperimentConfig) -> Result<(InteractionModel, Arc<Window>, RunPlan), CliError> {
    let model = config.build_model()?;
    let n_max = *config.n_list()?.last().expect("validated");
    let window =
        window_for(&model, n_max, config.boundary()?).map_err(|e| CliError::Config(format!("run.n_list: {e}")))?;
    let init = config.init_mode(&model, &window)?;
    Ok((model, window, config.plan(init)))
}

fn sweep_n_cmd(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let (model, window, plan) = largest_window(config)?;
    let (s_hat, source) = resolve_s(config, &model, &window, &plan)?;
    let tau = config.tau()?;
    let table = sweep_n(&model, config.n_list()?, tau, &plan, config.boundary()?, Some(s_hat)).map_err(rt)?;
    let mut out = Outcome::default();
    out.csv("n_sweep.csv", &output::n_sweep_rows(&table))?;
    out.summary = json!({
        "tau": tau,
        "s_hat": s_hat,
        "s_hat_source": source,
        "gaps_shrink_2se": table.gaps_shrink(2.0),
        "final_gap": table.final_gap(),
    });
    out.json("summary.json", &out.summary.clone());
    Ok(out)
}

fn estimate_s(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let s = setup(config)?;
    let tau = config.run.tau.unwrap_or(1.0);
    let seed = derive_seed(config.seed, 0x5e);
    let parts = (0..s.plan.replicas as u64)
        .into_par_iter()
        .map(|chain| {
            let (start, _) = init_state(&s.model, &s.window, &s.plan.init, seed, chain)?;
            let spec = ProposalSpec::new(tau, s.window.len(), s.plan.increments)?;
            let options = RunOptions {
                recording: Recording::Summary,
                trace_coords: 0,
                snapshot_every: Some(s.plan.thinning),
            };
            let run = run_chain(&s.model, start, spec, s.plan.steps, seed, chain, &options)?;
            estimate_s2(&s.model, &s.window, &run.snapshots)
        })
        .collect::<mhscale_core::Result<Vec<_>>>()
        .map_err(rt)?;
    let s2 = pool_replicas(&parts).map_err(rt)?;
    let exact = if s.model.is_quadratic() {
        Some(gaussian_s2_exact(&s.model, &s.window).map_err(rt)?)
    } else {
        None
    };
    let hash = config.content_hash();
    let mut rows = vec![EstimatorRow::new("s2", &s2, &hash)];
    if let Some(e) = exact {
        rows.push(EstimatorRow::new("s2_exact", &EstimateWithError::exact(e, 0), &hash));
    }
    let mut out = Outcome::default();
    out.csv("estimators.csv", &rows)?;
    let mut summary = json!({"s2_hat": s2.value, "s2_se": s2.std_error, "n_samples": s2.n_samples});
    if let Some(e) = exact {
        summary["s2_exact"] = json!(e);
        summary["z"] = json!(s2.z_against_value(e));
    }
    out.summary = summary;
    out.json("s2.json", &out.summary.clone());
    Ok(out)
}

fn dirichlet_check(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let name = config.run.cylinder.as_deref().expect("validated");
    let f = cylinder::builtin(name).map_err(|e| CliError::Config(format!("run.cylinder: {e}")))?;
    let (model, window, plan) = largest_window(config)?;
    let (s_hat, source) = resolve_s(config, &model, &window, &plan)?;
    let tau = config.tau()?;
    let grad_sq = exact_grad_sq_mean(f.as_ref(), &model).map_or(GradSqSource::Samples, GradSqSource::Exact);
    let table = mosco_m2_check(
        f.as_ref(),
        &model,
        config.n_list()?,
        tau,
        &plan,
        config.boundary()?,
        Some(s_hat),
        grad_sq,
    )
    .map_err(rt)?;
    let mut out = Outcome::default();
    out.csv("m2_table.csv", &output::m2_rows(&table))?;
    out.summary = json!({
        "function": name,
        "tau": tau,
        "s_hat": s_hat,
        "s_hat_source": source,
        "grad_sq": match grad_sq { GradSqSource::Exact(_) => "quadrature", GradSqSource::Samples => "samples" },
        "gaps_nonincreasing_2se": table.gaps_nonincreasing(2.0),
        "final_within_2se": table.final_within(2.0),
    });
    out.json("summary.json", &out.summary.clone());
    Ok(out)
}

fn clt_check(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let s = setup(config)?;
    let tau = config.tau()?;
    let (s_hat, source) = resolve_s(config, &s.model, &s.window, &s.plan)?;
    let records = replica_records(&s, tau)?;
    let stats = records
        .iter()
        .map(|r| delta_h_stats(r))
        .collect::<mhscale_core::Result<Vec<_>>>()
        .map_err(rt)?;
    let mean = pool_replicas(&stats.iter().map(|d| d.mean).collect::<Vec<_>>()).map_err(rt)?;
    let var = pool_replicas(&stats.iter().map(|d| d.variance).collect::<Vec<_>>()).map_err(rt)?;
    let target_var = tau * tau * s_hat * s_hat;
    let target_mean = target_var / 2.0;
    let total: usize = records.iter().map(Vec::len).sum();
    let (ks, ks_crit, mean_z, var_rel) = if target_var > 0.0 {
        let sd = target_var.sqrt();
        let z: Vec<f64> = records
            .iter()
            .flatten()
            .map(|r| (r.delta_h - target_mean) / sd)
            .collect();
        (
            ks_statistic(&z, normal_cdf).map_err(rt)?,
            ks_critical_1pct(total),
            mean.z_against_value(target_mean),
            (var.value - target_var).abs() / target_var,
        )
    } else {
        let all_zero = mean.value == 0.0 && var.value == 0.0;
        let v = if all_zero { 0.0 } else { f64::INFINITY };
        (v, ks_critical_1pct(total), v, v)
    };
    let passed = mean_z < 3.0 && var_rel <= 0.05 && ks < ks_crit;
    let hash = config.content_hash();
    let n_total = total as u64;
    let mut out = Outcome::default();
    out.csv(
        "estimators.csv",
        &[
            EstimatorRow::new("dh_mean", &mean, &hash),
            EstimatorRow::new("dh_var", &var, &hash),
            EstimatorRow::new("ks_stat", &EstimateWithError::exact(ks, n_total), &hash),
        ],
    )?;
    out.summary = json!({
        "dh_mean": mean.value,
        "dh_mean_se": mean.std_error,
        "dh_var": var.value,
        "dh_var_se": var.std_error,
        "ks_stat": ks,
        "ks_critical_1pct": ks_crit,
        "target_mean": target_mean,
        "target_var": target_var,
        "s_hat": s_hat,
        "s_hat_source": source,
        "passed": passed,
    });
    out.json("clt.json", &out.summary.clone());
    if !passed {
        out.failure = Some(format!(
            "delta H law off target: mean z {mean_z:.3} (limit 3), variance rel. gap {var_rel:.4} (limit 0.05), KS {ks:.5} (limit {ks_crit:.5})"
        ));
    }
    Ok(out)
}

fn check_row(check: &str, statistic: f64, threshold: f64, detail: String) -> CheckRow {
    CheckRow {
        check: check.to_string(),
        passed: statistic <= threshold,
        statistic,
        threshold,
        detail,
    }
}

const ORACLE_TAUS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

fn oracle_check(config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = config.build_model()?;
    let boundary = config.boundary()?;
    let steps = config.run.steps;
    let seed = config.seed;
    let battery: Vec<&str> = match &config.run.battery {
        Some(b) => b.iter().map(String::as_str).collect(),
        None => BATTERY.to_vec(),
    };
    let single = window_for(&model, 1, boundary).map_err(rt)?;
    let init_single = config.init_mode(&model, &single)?;
    let mut rows = Vec::new();
    for check in battery {
        let row = match check {
            "c_identity" => {
                let zs = [0.5, 1.0, 2.38, 4.0]
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        let mc = c_mc_oracle(t, 1.0, 1_000_000, derive_seed(seed, 0xc0 + i as u64))?;
                        Ok(mc.z_against_value(c_theoretical(t, 1.0)))
                    })
                    .collect::<mhscale_core::Result<Vec<f64>>>()
                    .map_err(rt)?;
                check_row(check, zs.iter().cloned().fold(0.0, f64::max), 4.0, format!("z {zs:?}"))
            }
            "acceptance_quadrature" => {
                let zs = ORACLE_TAUS
                    .par_iter()
                    .enumerate()
                    .map(|(i, &tau)| {
                        let quad = quad_acceptance(&model, &single, tau)?;
                        let (x, _) = init_state(&model, &single, &init_single, seed, i as u64)?;
                        let spec = ProposalSpec::new(tau, 1, config.run.increments)?;
                        let run = run_chain(&model, x, spec, steps, seed, i as u64, &RunOptions::default())?;
                        Ok(acceptance_rate(&run.records)?.z_against_value(quad))
                    })
                    .collect::<mhscale_core::Result<Vec<f64>>>()
                    .map_err(rt)?;
                check_row(check, zs.iter().cloned().fold(0.0, f64::max), 3.0, format!("z {zs:?}"))
            }
            "detailed_balance" => {
                let r = detailed_balance_check(&model, &single, 1.5, steps, seed, 24, 4.0).map_err(rt)?;
                let mut row = check_row(
                    check,
                    r.max_z.max(r.max_occupancy_z),
                    4.0,
                    format!(
                        "pair z {} occupancy z {} cells {}",
                        r.max_z, r.max_occupancy_z, r.cells_checked
                    ),
                );
                row.passed = r.passed;
                row
            }
            "s2_gaussian" => {
                if model.is_quadratic() {
                    let window = config.build_window(&model)?;
                    let init = config.init_mode(&model, &window)?;
                    let est = estimate_s2_reference(&model, &window, &config.plan(init)).map_err(rt)?;
                    let exact = gaussian_s2_exact(&model, &window).map_err(rt)?;
                    let z = est.z_against_value(exact);
                    check_row(
                        check,
                        z,
                        3.0,
                        format!("estimate {} se {} exact {exact}", est.value, est.std_error),
                    )
                } else {
                    check_row(check, 0.0, 3.0, "skipped: model is not Gaussian".into())
                }
            }
            "determinism" => {
                let short = steps.min(2_000);
                let rerun_seed = if config.run.inject_seed_corruption {
                    seed ^ 1
                } else {
                    seed
                };
                let run = |sd: u64| -> mhscale_core::Result<_> {
                    let (x, _) = init_state(&model, &single, &init_single, seed, 0)?;
                    let spec = ProposalSpec::new(1.0, 1, config.run.increments)?;
                    run_chain(&model, x, spec, short, sd, 0, &RunOptions::default())
                };
                let a = run(seed).map_err(rt)?;
                let b = run(rerun_seed).map_err(rt)?;
                let same = a.same_output(&b);
                check_row(
                    check,
                    if same { 0.0 } else { 1.0 },
                    0.0,
                    if same {
                        "reruns identical".into()
                    } else {
                        "reruns differ".into()
                    },
                )
            }
            other => return Err(CliError::Config(format!("run.battery: unknown check {other:?}"))),
        };
        rows.push(row);
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.check.as_str()).collect();
    let mut out = Outcome {
        summary: json!({"checks": rows.len(), "failed": failed}),
        ..Outcome::default()
    };
    if !failed.is_empty() {
        out.failure = Some(format!("failed checks: {}", failed.join(", ")));
    }
    out.csv("oracle_check.csv", &rows)?;
    Ok(out)
}
