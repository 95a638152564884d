//! Acceptance battery: one PASS/FAIL line per criterion, nonzero exit if
//! any criterion fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use mhscale_cli::{execute, CommandKind, ExperimentConfig};
use mhscale_core::cylinder::{CylinderFunction, SinX1};
use mhscale_core::estimators::acceptance_rate;
use mhscale_core::lattice::{h2_diagnostics, BoundaryMode, Neighborhood, Window};
use mhscale_core::model::{Configuration, InteractionModel, ModelFamily};
use mhscale_core::oracle::{detailed_balance_check, gaussian_s2_exact, quad_acceptance};
use mhscale_core::rng::StreamRng;
use mhscale_core::sampler::{accept_prob, init_state, run_chain, IncrementFamily, InitMode, ProposalSpec, RunOptions};
use mhscale_core::scaling::{
    c_mc_oracle, c_theoretical, estimate_s2_reference, exact_grad_sq_mean, mosco_m2_check, sweep_tau, tau_star,
    GradSqSource, RunPlan,
};
use rand::Rng;
use serde_json::json;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn product(n: usize) -> (InteractionModel, Arc<Window>) {
    let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
    let w = Arc::new(Window::with_size(1, n, m.neighborhood(), BoundaryMode::Zero).unwrap());
    (m, w)
}

fn optimal_acceptance() -> Outcome {
    let (m, w) = product(100);
    let clock = Instant::now();
    let (mut accepted, mut steps) = (0u64, 0u64);
    for chain in 0..8 {
        let (x, _) = init_state(&m, &w, &InitMode::ExactGaussian, 101, chain).unwrap();
        let spec = ProposalSpec::normal(2.38, 100).unwrap();
        let run = run_chain(&m, x, spec, 200_000, 101, chain, &RunOptions::summary()).unwrap();
        accepted += run.summary.accepted;
        steps += run.summary.steps;
    }
    let secs = clock.elapsed().as_secs_f64();
    let acc = accepted as f64 / steps as f64;
    verdict(
        (0.210..=0.260).contains(&acc) && secs <= 60.0,
        format!("pooled acceptance {acc:.5} over {steps} steps in {secs:.1} s"),
    )
}

fn c_identity() -> Outcome {
    let mut zs = Vec::new();
    for (i, ts) in [0.5, 1.0, 2.38, 4.0].into_iter().enumerate() {
        let mc = c_mc_oracle(ts, 1.0, 1_000_000, 200 + i as u64).unwrap();
        zs.push(mc.z_against_value(c_theoretical(ts, 1.0)));
    }
    let c = c_theoretical(2.38, 1.0);
    let zmax = zs.iter().cloned().fold(0.0, f64::max);
    verdict(
        zmax < 4.0 && (c - 0.2338).abs() <= 5e-4,
        format!("max MC z {zmax:.2}; c(2.38, 1) = {c:.6}"),
    )
}

fn tau_localization() -> Outcome {
    let (m, w) = product(100);
    let grid: Vec<f64> = (0..13).map(|i| 1.0 + 0.25 * i as f64).collect();
    let curve = sweep_tau(&m, &w, &grid, &RunPlan::new(100_000, 8, 301), Some(1.0)).unwrap();
    let best = curve.argmax_esjd().unwrap();
    let t1 = tau_star(1.0).unwrap();
    let scale_free = [0.5, 2.0, 5.0]
        .iter()
        .all(|&s| (tau_star(s).unwrap() * s - t1).abs() < 1e-6);
    verdict(
        (best - 2.38).abs() <= 0.25 && (t1 / 2.38 - 1.0).abs() <= 1e-3 && scale_free,
        format!(
            "ESJD argmax {best}; tau* = {t1:.6} (relative gap to 2.38: {:.1e})",
            t1 / 2.38 - 1.0
        ),
    )
}

fn delta_h_clt() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config: ExperimentConfig = serde_json::from_value(json!({
        "model": {"family": "gaussian_product", "parameters": {"variance": 1.0}},
        "graph": {"d": 1, "n": 400},
        "run": {"tau": 1.0, "steps": 25000, "replicas": 8},
        "seed": 401
    }))
    .unwrap();
    let report = execute(CommandKind::CltCheck, &config, dir.path()).map_err(|e| e.to_string())?;
    let s = &report.summary;
    let f = |k: &str| s[k].as_f64().unwrap();
    let mean_z = (f("dh_mean") - 0.5).abs() / f("dh_mean_se");
    let var_rel = (f("dh_var") - 1.0).abs();
    verdict(
        mean_z < 3.0 && var_rel <= 0.05 && f("ks_stat") < f("ks_critical_1pct"),
        format!(
            "mean {:.5} (z {mean_z:.2}), variance {:.5}, KS {:.5} < {:.5}",
            f("dh_mean"),
            f("dh_var"),
            f("ks_stat"),
            f("ks_critical_1pct")
        ),
    )
}

fn s_estimator() -> Outcome {
    let m = InteractionModel::gff(1.0, 1.0, 2).unwrap();
    let w = Arc::new(Window::cube(2, 16, m.neighborhood(), BoundaryMode::Zero).unwrap());
    let exact = gaussian_s2_exact(&m, &w).unwrap();
    let est = estimate_s2_reference(&m, &w, &RunPlan::new(50_000, 8, 501)).unwrap();
    let z = est.z_against_value(exact);
    let rel = (est.value / exact - 1.0).abs();
    verdict(
        z < 3.0 && rel <= 0.05,
        format!(
            "estimate {:.5} +- {:.5}, exact {exact:.5}, z {z:.2}, relative gap {rel:.2e}",
            est.value, est.std_error
        ),
    )
}

fn mosco_table() -> Outcome {
    let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
    let grad = exact_grad_sq_mean(&SinX1, &m).unwrap();
    let closed = (1.0 + (-2.0f64).exp()) / 2.0;
    let table = mosco_m2_check(
        &SinX1,
        &m,
        &[25, 100, 400],
        2.38,
        &RunPlan::new(200_000, 8, 601),
        BoundaryMode::Zero,
        Some(1.0),
        GradSqSource::Exact(grad),
    )
    .unwrap();
    let limit = 2.38 * 2.38 * c_theoretical(2.38, 1.0) / 2.0 * closed;
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("n={} gap {:.5} se {:.5}", r.n, r.gap, r.gap_se))
        .collect();
    verdict(
        (grad - closed).abs() < 1e-8
            && (table.rows[0].limiting.value - limit).abs() < 1e-8
            && table.gaps_nonincreasing(2.0)
            && table.final_within(2.0),
        format!("{} vs E(f) = {limit:.6}; {}", SinX1.name(), rows.join(", ")),
    )
}

fn oracle_equivalence() -> Outcome {
    let base = InteractionModel::phi4(0.5, -0.5, 1.0, 1).unwrap();
    let well = InteractionModel::new(base.family().clone(), Neighborhood::origin_only(1)).unwrap();
    let mut zmax: f64 = 0.0;
    let mut balanced = true;
    let mut detail = Vec::new();
    for (name, m) in [
        ("product", InteractionModel::gaussian_product(1.0, 1).unwrap()),
        ("double well", well),
    ] {
        let w = Arc::new(Window::with_size(1, 1, m.neighborhood(), BoundaryMode::Zero).unwrap());
        let init = if m.is_quadratic() {
            InitMode::ExactGaussian
        } else {
            InitMode::BurnIn {
                steps: Some(5_000),
                tau: Some(1.5),
            }
        };
        for (i, tau) in [0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
            let quad = quad_acceptance(&m, &w, tau).unwrap();
            let (x, _) = init_state(&m, &w, &init, 701, i as u64).unwrap();
            let run = run_chain(
                &m,
                x,
                ProposalSpec::normal(tau, 1).unwrap(),
                400_000,
                701,
                i as u64,
                &RunOptions::default(),
            )
            .unwrap();
            zmax = zmax.max(acceptance_rate(&run.records).unwrap().z_against_value(quad));
        }
        let db = detailed_balance_check(&m, &w, 1.5, 400_000, 702, 24, 4.0).unwrap();
        balanced &= db.passed;
        detail.push(format!("{name}: balance z {:.2}/{:.2}", db.max_z, db.max_occupancy_z));
    }
    verdict(
        zmax < 3.0 && balanced,
        format!("max MC-vs-quadrature z {zmax:.2}; {}", detail.join("; ")),
    )
}

fn window_growth() -> Outcome {
    let report = h2_diagnostics(2, &[2, 4, 8, 16], &Neighborhood::nearest(2)).unwrap();
    let slope = report.boundary_slope().unwrap();
    let increasing = report.rows.windows(2).all(|w| w[1].inradius > w[0].inradius);
    let radii: Vec<f64> = report.rows.iter().map(|r| r.inradius).collect();
    let mut padded = report.clone();
    for r in &mut padded.rows {
        r.boundary_ratio = r.padded_boundary_ratio;
    }
    let padded_slope = padded.boundary_slope().unwrap();
    verdict(
        slope <= -0.45 && increasing,
        format!("boundary-ratio slope {slope:.5} (padded boundary {padded_slope:.3}); inradius {radii:?}"),
    )
}

fn run_cli(cmd: &str, config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_mhscale"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let product = |graph: serde_json::Value, run: serde_json::Value| json!({"model": {"family": "gaussian_product"}, "graph": graph, "run": run, "seed": 901});
    let well = json!({"family": "phi4", "parameters": {"a": 0.5, "b": -0.5}, "neighborhood": "origin"});
    let cases = [
        (
            "sample",
            product(
                json!({"d": 1, "n": 50}),
                json!({"tau": 2.38, "steps": 5000, "replicas": 4}),
            ),
        ),
        (
            "sweep-tau",
            json!({"model": well, "graph": {"d": 1, "n": 20},
                   "run": {"tau_grid": [1.0, 2.38, 3.0], "steps": 3000, "replicas": 3}, "seed": 902}),
        ),
        (
            "sweep-n",
            product(
                json!({"d": 1, "n": 1}),
                json!({"tau": 2.38, "n_list": [10, 40], "steps": 3000}),
            ),
        ),
        (
            "estimate-s",
            json!({"model": {"family": "gff", "parameters": {"coupling": 1.0, "mass2": 1.0}},
                   "graph": {"d": 2, "L": 3}, "run": {"steps": 5000, "replicas": 3}, "seed": 903}),
        ),
        (
            "dirichlet-check",
            product(
                json!({"d": 1, "n": 1}),
                json!({"tau": 2.38, "n_list": [10, 40], "steps": 3000, "cylinder": "gauss_bump_x1x2"}),
            ),
        ),
        (
            "clt-check",
            product(json!({"d": 1, "n": 100}), json!({"tau": 1.0, "steps": 5000})),
        ),
        (
            "oracle-check",
            json!({"model": well, "graph": {"d": 1, "n": 5}, "run": {"steps": 20000, "replicas": 2}, "seed": 904}),
        ),
    ];
    let mut compared = 0;
    for (cmd, value) in cases {
        let cfg = dir.path().join(format!("{cmd}.json"));
        std::fs::write(&cfg, serde_json::to_string_pretty(&value).unwrap()).unwrap();
        let (a, b) = (dir.path().join(format!("{cmd}-a")), dir.path().join(format!("{cmd}-b")));
        let (ca, cb) = (run_cli(cmd, &cfg, &a), run_cli(cmd, &cfg, &b));
        if ca != cb || !(ca == 0 || ca == 4) {
            return Err(format!("{cmd}: exit codes {ca} and {cb}"));
        }
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(format!("{cmd}: no CSV written"));
        }
        for name in names {
            if std::fs::read(a.join(&name)).unwrap() != std::fs::read(b.join(&name)).unwrap() {
                return Err(format!("{cmd}: {name} differs between reruns"));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} CSVs byte-identical across reruns of 7 commands"))
}

fn zoo(dim: usize) -> Vec<InteractionModel> {
    let mut e = vec![0i64; dim];
    e[0] = 1;
    vec![
        InteractionModel::gaussian_product(1.7, dim).unwrap(),
        InteractionModel::gff(1.0, 1.0, dim).unwrap(),
        InteractionModel::phi4(0.25, -0.5, 0.8, dim).unwrap(),
        InteractionModel::new(
            ModelFamily::Pairwise {
                couplings: vec![(e, 0.7)],
                self_potential: vec![0.3, -0.2, 0.9, 0.0, 0.05],
                supports_free_boundary: true,
            },
            Neighborhood::nearest(dim),
        )
        .unwrap(),
    ]
}

fn property_suites() -> Outcome {
    let mut rng = StreamRng::new(1001, 0);
    let (mut fd_err, mut anti, mut shift): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for dim in [1, 2] {
        for model in zoo(dim) {
            for mode in [BoundaryMode::Zero, BoundaryMode::Constant(0.4), BoundaryMode::Free] {
                let w = Arc::new(Window::build_box(dim, 2, model.neighborhood(), mode).unwrap());
                let draw = |rng: &mut StreamRng| {
                    let v = (0..w.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
                    Configuration::new(w.clone(), v).unwrap()
                };
                let shifted = model.shifted(rng.random_range(-50.0..50.0));
                for _ in 0..20 {
                    let x = draw(&mut rng);
                    let y = draw(&mut rng);
                    for k in 0..w.len() {
                        let g = model.grad_hamiltonian(&x, w.vertex(k), true).unwrap();
                        let h = 1e-5;
                        let mut p = x.values().to_vec();
                        let mut q = p.clone();
                        p[k] += h;
                        q[k] -= h;
                        let hp = model.hamiltonian(&Configuration::new(w.clone(), p).unwrap()).unwrap();
                        let hq = model.hamiltonian(&Configuration::new(w.clone(), q).unwrap()).unwrap();
                        fd_err = fd_err.max(((hp - hq) / (2.0 * h) - g).abs());
                    }
                    let r = model.log_density_ratio(&x, &y).unwrap() + model.log_density_ratio(&y, &x).unwrap();
                    anti = anti.max(r.abs());
                    let d = accept_prob(&model, &x, &y).unwrap() - accept_prob(&shifted, &x, &y).unwrap();
                    shift = shift.max(d.abs());
                }
            }
        }
    }
    let draws = 1_000_000;
    let mut moments_ok = true;
    for family in [IncrementFamily::StandardNormal, IncrementFamily::Uniform] {
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let r = family.sample(&mut rng);
            s1 += r;
            s2 += r * r;
        }
        let nf = draws as f64;
        moments_ok &= (s1 / nf).abs() < 4.0 / nf.sqrt() && (s2 / nf - 1.0).abs() < 5.0 / nf.sqrt();
    }
    verdict(
        fd_err < 1e-6 && anti <= 1e-12 && shift <= 1e-12 && moments_ok,
        format!(
            "max FD gap {fd_err:.1e}, antisymmetry {anti:.1e}, shift {shift:.1e}, increment moments ok: {moments_ok}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("optimal acceptance near 0.234", optimal_acceptance),
        ("c(tau) closed form against Monte Carlo", c_identity),
        ("optimal step size localization", tau_localization),
        ("energy-difference CLT", delta_h_clt),
        ("ergodic s^2 estimator", s_estimator),
        ("Dirichlet form table", mosco_table),
        ("oracle equivalence", oracle_equivalence),
        ("window growth diagnostics", window_growth),
        ("CLI determinism", determinism),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
