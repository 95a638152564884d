//! Closed-form limit curves and the sweep harness built on them.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cylinder::CylinderFunction;
use crate::error::{Error, Result};
use crate::estimators::{
    acceptance_rate, dirichlet_form_empirical, esjd_first_coord, estimate_s2, limiting_form, pool_replicas,
    EstimateWithError,
};
use crate::lattice::{BoundaryMode, Window};
use crate::model::{InteractionModel, ModelFamily};
use crate::oracle::{quad_expectation_1d, Density1d};
use crate::rng::{derive_seed, StreamRng};
use crate::sampler::{init_state, run_chain, IncrementFamily, InitMode, ProposalSpec, Recording, RunOptions};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Limiting acceptance `c(tau) = 2 Phi(-tau s / 2)`.
pub fn c_theoretical(tau: f64, s: f64) -> f64 {
    if tau == 0.0 {
        return 1.0;
    }
    2.0 * normal_cdf(-0.5 * tau * s)
}

/// Limiting speed `tau^2 c(tau)`.
pub fn efficiency(tau: f64, s: f64) -> f64 {
    tau * tau * c_theoretical(tau, s)
}

/// Monte Carlo value of `E[min(1, exp(-tau s Z - tau^2 s^2 / 2))]`.
pub fn c_mc_oracle(tau: f64, s: f64, m: usize, seed: u64) -> Result<EstimateWithError> {
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    if tau == 0.0 {
        return Ok(EstimateWithError::exact(1.0, m as u64));
    }
    let mut rng = StreamRng::new(seed, 0);
    let (a, b) = (tau * s, 0.5 * tau * tau * s * s);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..m {
        let z: f64 = rng.sample(StandardNormal);
        let v = (-(a * z + b)).exp().min(1.0);
        sum += v;
        sum_sq += v * v;
    }
    let mf = m as f64;
    let mean = sum / mf;
    let var = if m > 1 {
        (sum_sq - mf * mean * mean) / (mf - 1.0)
    } else {
        0.0
    };
    Ok(EstimateWithError {
        value: mean,
        std_error: (var.max(0.0) / mf).sqrt(),
        n_samples: m as u64,
    })
}

/// Maximizer of `tau^2 c(tau)`, found by bisecting the stationarity condition
/// `4 Phi(-u/2) = u phi(u/2)` in `u = tau s` and rescaling by `1/s`.
pub fn tau_star(s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("s must be positive, got {s}")));
    }
    let slope = |u: f64| 4.0 * normal_cdf(-0.5 * u) - u * (-0.125 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (mut a, mut b) = (1.0, 10.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b) / s)
}

/// Shared settings of a multi-chain experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub steps: u64,
    pub replicas: usize,
    pub seed: u64,
    pub init: InitMode,
    pub increments: IncrementFamily,
    /// Keep every `thinning`-th state for state-dependent estimators.
    pub thinning: usize,
}

impl RunPlan {
    pub fn new(steps: u64, replicas: usize, seed: u64) -> Self {
        RunPlan {
            steps,
            replicas,
            seed,
            init: InitMode::ExactGaussian,
            increments: IncrementFamily::StandardNormal,
            thinning: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be >= 1".into()));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidArgument("replicas must be >= 1".into()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidArgument("thinning must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stream label of the reference chains used to estimate `s`.
const S_HAT_LABEL: u64 = 0x5a;

/// `s^2` from `plan.replicas` chains at `tau = 1`, states thinned by
/// `plan.thinning`, pooled across replicas.
pub fn estimate_s2_reference(
    model: &InteractionModel,
    window: &Arc<Window>,
    plan: &RunPlan,
) -> Result<EstimateWithError> {
    plan.validate()?;
    let seed = derive_seed(plan.seed, S_HAT_LABEL);
    let parts = (0..plan.replicas as u64)
        .into_par_iter()
        .map(|chain| {
            let (start, _) = init_state(model, window, &plan.init, seed, chain)?;
            let spec = ProposalSpec::new(1.0, window.len(), plan.increments)?;
            let options = RunOptions {
                recording: Recording::Summary,
                trace_coords: 0,
                snapshot_every: Some(plan.thinning),
            };
            let run = run_chain(model, start, spec, plan.steps, seed, chain, &options)?;
            estimate_s2(model, window, &run.snapshots)
        })
        .collect::<Result<Vec<_>>>()?;
    pool_replicas(&parts)
}

fn s_from_s2(est: &EstimateWithError) -> Result<f64> {
    if est.value > 0.0 {
        Ok(est.value.sqrt())
    } else {
        Err(Error::InvalidArgument("estimated s^2 is not positive".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub tau: f64,
    pub acceptance: EstimateWithError,
    pub esjd: EstimateWithError,
    pub c_theory: f64,
    pub efficiency_theory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub s_hat: f64,
    pub rows: Vec<ScalingRow>,
}

impl ScalingCurve {
    /// Grid point with the largest empirical ESJD (first one on ties).
    pub fn argmax_esjd(&self) -> Option<f64> {
        self.rows
            .iter()
            .fold(None, |best: Option<&ScalingRow>, r| match best {
                Some(b) if b.esjd.value >= r.esjd.value => Some(b),
                _ => Some(r),
            })
            .map(|r| r.tau)
    }

    /// Acceptance never rises by more than `k` combined standard errors
    /// between neighbouring grid points.
    pub fn acceptance_nonincreasing(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let se = w[0].acceptance.std_error.hypot(w[1].acceptance.std_error);
            w[1].acceptance.value <= w[0].acceptance.value + k * se
        })
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} is empty")));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "{name} entries must be finite and >= 0"
        )));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// One chain per `(tau, replica)`; acceptance and ESJD pooled over
/// replicas and joined with the theory curve at `s_hat` (estimated with
/// [`estimate_s2_reference`] when not given).
pub fn sweep_tau(
    model: &InteractionModel,
    window: &Arc<Window>,
    tau_grid: &[f64],
    plan: &RunPlan,
    s_hat: Option<f64>,
) -> Result<ScalingCurve> {
    check_grid("tau grid", tau_grid)?;
    plan.validate()?;
    let s_hat = match s_hat {
        Some(s) => s,
        None => s_from_s2(&estimate_s2_reference(model, window, plan)?)?,
    };
    let n = window.len();
    let reps = plan.replicas;
    let jobs: Vec<(usize, usize)> = (0..tau_grid.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, r)| {
            let chain = (i * reps + r) as u64;
            let (start, _) = init_state(model, window, &plan.init, plan.seed, chain)?;
            let spec = ProposalSpec::new(tau_grid[i], n, plan.increments)?;
            let run = run_chain(model, start, spec, plan.steps, plan.seed, chain, &RunOptions::default())?;
            Ok((acceptance_rate(&run.records)?, esjd_first_coord(&run.records, n)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = tau_grid
        .iter()
        .enumerate()
        .map(|(i, &tau)| {
            let chunk = &results[i * reps..(i + 1) * reps];
            let acc: Vec<_> = chunk.iter().map(|p| p.0).collect();
            let esjd: Vec<_> = chunk.iter().map(|p| p.1).collect();
            Ok(ScalingRow {
                tau,
                acceptance: pool_replicas(&acc)?,
                esjd: pool_replicas(&esjd)?,
                c_theory: c_theoretical(tau, s_hat),
                efficiency_theory: efficiency(tau, s_hat),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingCurve { s_hat, rows })
}

/// Window of `n` sites for `model`: a cube when `n` is a perfect `d`-th
/// power of the model's dimension.
pub fn window_for(model: &InteractionModel, n: usize, boundary: BoundaryMode) -> Result<Arc<Window>> {
    let nb = model.neighborhood();
    Ok(Arc::new(Window::with_size(nb.dim(), n, nb, boundary)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSweepRow {
    pub n: usize,
    pub acceptance: EstimateWithError,
    pub c_theory: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSweepTable {
    pub tau: f64,
    pub s_hat: f64,
    pub rows: Vec<NSweepRow>,
}

impl NSweepTable {
    /// Gaps never grow by more than `k` standard errors along the table.
    pub fn gaps_shrink(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let se = w[0].acceptance.std_error.hypot(w[1].acceptance.std_error);
            w[1].gap <= w[0].gap + k * se
        })
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.rows.last().map(|r| r.gap)
    }
}

fn check_sizes(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("n_list is empty".into()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) || n_list[0] == 0 {
        return Err(Error::InvalidArgument(
            "n_list must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Acceptance at fixed `tau` across window sizes, against `c(tau)`.
pub fn sweep_n(
    model: &InteractionModel,
    n_list: &[usize],
    tau: f64,
    plan: &RunPlan,
    boundary: BoundaryMode,
    s_hat: Option<f64>,
) -> Result<NSweepTable> {
    check_sizes(n_list)?;
    plan.validate()?;
    let windows = n_list
        .iter()
        .map(|&n| window_for(model, n, boundary))
        .collect::<Result<Vec<_>>>()?;
    let s_hat = match s_hat {
        Some(s) => s,
        None => s_from_s2(&estimate_s2_reference(model, windows.last().expect("nonempty"), plan)?)?,
    };
    let c = c_theoretical(tau, s_hat);
    let reps = plan.replicas;
    let jobs: Vec<(usize, usize)> = (0..windows.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, r)| {
            let w = &windows[i];
            let chain = (i * reps + r) as u64;
            let (start, _) = init_state(model, w, &plan.init, plan.seed, chain)?;
            let spec = ProposalSpec::new(tau, w.len(), plan.increments)?;
            let run = run_chain(model, start, spec, plan.steps, plan.seed, chain, &RunOptions::default())?;
            acceptance_rate(&run.records)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let acceptance = pool_replicas(&results[i * reps..(i + 1) * reps])?;
            Ok(NSweepRow {
                n,
                acceptance,
                c_theory: c,
                gap: (acceptance.value - c).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NSweepTable { tau, s_hat, rows })
}

/// `int |grad f|^2 dpi` by quadrature when `f` reads one coordinate and the
/// one-site marginal is known in closed form.
pub fn exact_grad_sq_mean(f: &dyn CylinderFunction, model: &InteractionModel) -> Option<f64> {
    if f.arity() == 0 {
        return Some(0.0);
    }
    match model.family() {
        ModelFamily::GaussianProduct { variance } if f.arity() == 1 => Some(quad_expectation_1d(
            |x| f.grad_norm_sq(&[x]),
            &Density1d::Normal {
                mean: 0.0,
                sd: variance.sqrt(),
            },
        )),
        _ => None,
    }
}

/// Where the limiting form's `int |grad f|^2 dpi` comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradSqSource {
    Exact(f64),
    /// Averaged over the largest-`n` chains, thinned by the plan.
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2Row {
    pub n: usize,
    pub empirical: EstimateWithError,
    pub limiting: EstimateWithError,
    pub gap: f64,
    pub gap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M2Table {
    pub function: String,
    pub tau: f64,
    pub s_hat: f64,
    pub rows: Vec<M2Row>,
}

impl M2Table {
    /// Gaps never grow by more than `k` combined standard errors.
    pub fn gaps_nonincreasing(&self, k: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].gap <= w[0].gap + k * w[0].gap_se.hypot(w[1].gap_se))
    }

    /// The last gap is within `k` of its standard errors of zero.
    pub fn final_within(&self, k: f64) -> bool {
        self.rows.last().is_some_and(|r| r.gap <= k * r.gap_se)
    }
}

/// Empirical Dirichlet form of `f` for each window size against the single
/// limiting value `(tau^2 c(tau) / 2) int |grad f|^2 dpi`.
#[allow(clippy::too_many_arguments)]
pub fn mosco_m2_check(
    f: &dyn CylinderFunction,
    model: &InteractionModel,
    n_list: &[usize],
    tau: f64,
    plan: &RunPlan,
    boundary: BoundaryMode,
    s_hat: Option<f64>,
    grad_sq: GradSqSource,
) -> Result<M2Table> {
    check_sizes(n_list)?;
    plan.validate()?;
    if f.arity() > n_list[0] {
        return Err(Error::CylinderTooWide {
            needed: f.arity(),
            available: n_list[0],
        });
    }
    let windows = n_list
        .iter()
        .map(|&n| window_for(model, n, boundary))
        .collect::<Result<Vec<_>>>()?;
    let s_hat = match s_hat {
        Some(s) => s,
        None => s_from_s2(&estimate_s2_reference(model, windows.last().expect("nonempty"), plan)?)?,
    };
    let width = f.arity().max(1);
    let reps = plan.replicas;
    let last = windows.len() - 1;
    let jobs: Vec<(usize, usize)> = (0..windows.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, r)| {
            let w = &windows[i];
            let chain = (i * reps + r) as u64;
            let (start, _) = init_state(model, w, &plan.init, plan.seed, chain)?;
            let spec = ProposalSpec::new(tau, w.len(), plan.increments)?;
            let options = RunOptions {
                recording: Recording::Summary,
                trace_coords: width,
                snapshot_every: None,
            };
            let run = run_chain(model, start, spec, plan.steps, plan.seed, chain, &options)?;
            let trace = run.trace.expect("trace requested");
            let form = dirichlet_form_empirical(f, &trace, w.len())?;
            let limit = if i == last && grad_sq == GradSqSource::Samples {
                Some(limiting_form(f, tau, s_hat, trace.rows().step_by(plan.thinning))?)
            } else {
                None
            };
            Ok((form, limit))
        })
        .collect::<Result<Vec<_>>>()?;
    let limiting = match grad_sq {
        GradSqSource::Exact(g) => EstimateWithError::exact(0.5 * efficiency(tau, s_hat) * g, 0),
        GradSqSource::Samples => {
            let parts: Vec<_> = results[last * reps..].iter().filter_map(|p| p.1).collect();
            pool_replicas(&parts)?
        }
    };
    let rows = n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let parts: Vec<_> = results[i * reps..(i + 1) * reps].iter().map(|p| p.0).collect();
            let empirical = pool_replicas(&parts)?;
            Ok(M2Row {
                n,
                empirical,
                limiting,
                gap: (empirical.value - limiting.value).abs(),
                gap_se: empirical.std_error.hypot(limiting.std_error),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(M2Table {
        function: f.name().to_string(),
        tau,
        s_hat,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::{Constant, SinX1};

    #[test]
    fn c_theoretical_examples() {
        for s in [0.5, 1.0, 3.0] {
            assert_eq!(c_theoretical(0.0, s), 1.0);
        }
        assert!((c_theoretical(2.38, 1.0) - 0.2338).abs() < 5e-4);
        assert!(c_theoretical(1e3, 1.0) < 1e-300);
        // depends only on tau * s
        for (t, s) in [(0.5, 1.0), (1.3, 2.7), (2.38, 0.4)] {
            assert!((c_theoretical(t, s) - c_theoretical(t * s, 1.0)).abs() < 1e-12);
            assert!((c_theoretical(t, s) - c_theoretical(t * s / 7.0, 7.0)).abs() < 1e-12);
        }
        let grid: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
        assert!(grid
            .windows(2)
            .all(|w| c_theoretical(w[1], 1.0) < c_theoretical(w[0], 1.0)));
    }

    #[test]
    fn normal_cdf_tails() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        // relative accuracy deep in the lower tail
        let want = 7.619_853_024_160_527e-24;
        assert!((normal_cdf(-10.0) / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_star_examples() {
        let t1 = tau_star(1.0).unwrap();
        // root of 4 Phi(-t/2) = t phi(t/2) at 30 digits
        assert!((t1 - 2.381_202_496_685_540_6).abs() < 1e-12, "{t1}");
        assert!(efficiency(t1, 1.0) >= efficiency(t1 + 1e-4, 1.0));
        assert!(efficiency(t1, 1.0) >= efficiency(t1 - 1e-4, 1.0));
        assert!((t1 / 2.38 - 1.0).abs() < 1e-3);
        for s in [0.5, 1.0, 2.0, 5.0] {
            let t = tau_star(s).unwrap();
            assert!((t * s - t1).abs() < 1e-6);
            assert!((c_theoretical(t, s) - 0.234).abs() < 1e-3);
        }
        assert!((tau_star(2.0).unwrap() - t1 / 2.0).abs() < 1e-6);
        assert!(tau_star(0.0).is_err());
    }

    #[test]
    fn mc_oracle_agrees() {
        assert_eq!(c_mc_oracle(0.0, 1.0, 10, 1).unwrap().value, 1.0);
        let e = c_mc_oracle(1.0, 2.0, 200_000, 3).unwrap();
        assert!(e.z_against_value(c_theoretical(1.0, 2.0)) < 4.0);
    }

    #[test]
    fn trivial_sweeps() {
        let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
        let w = window_for(&m, 10, BoundaryMode::Zero).unwrap();
        let plan = RunPlan::new(200, 2, 9);
        let c = sweep_tau(&m, &w, &[0.0], &plan, Some(1.0)).unwrap();
        assert_eq!(c.rows[0].acceptance.value, 1.0);
        assert_eq!(c.rows[0].esjd.value, 0.0);
        assert!(sweep_tau(&m, &w, &[], &plan, Some(1.0)).is_err());
        assert!(sweep_tau(&m, &w, &[1.0, 0.5], &plan, Some(1.0)).is_err());

        let t = sweep_n(&m, &[1], 1.0, &plan, BoundaryMode::Zero, Some(1.0)).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].acceptance.value > 0.0);

        let z = mosco_m2_check(
            &SinX1,
            &m,
            &[2, 4],
            0.0,
            &plan,
            BoundaryMode::Zero,
            Some(1.0),
            GradSqSource::Samples,
        )
        .unwrap();
        assert!(z
            .rows
            .iter()
            .all(|r| r.empirical.value == 0.0 && r.limiting.value == 0.0));
        let k = mosco_m2_check(
            &Constant(1.0),
            &m,
            &[2, 4],
            2.38,
            &plan,
            BoundaryMode::Zero,
            Some(1.0),
            GradSqSource::Exact(0.0),
        )
        .unwrap();
        assert!(k.rows.iter().all(|r| r.gap == 0.0));
    }

    #[test]
    fn sweeps_are_deterministic() {
        let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
        let w = window_for(&m, 20, BoundaryMode::Zero).unwrap();
        let plan = RunPlan::new(500, 3, 4);
        let a = sweep_tau(&m, &w, &[1.0, 2.0], &plan, None).unwrap();
        let b = sweep_tau(&m, &w, &[1.0, 2.0], &plan, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_grad_sq_for_sin() {
        let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
        let g = exact_grad_sq_mean(&SinX1, &m).unwrap();
        assert!((g - 0.5 * (1.0 + (-2.0f64).exp())).abs() < 1e-10);
        let gff = InteractionModel::gff(1.0, 1.0, 1).unwrap();
        assert!(exact_grad_sq_mean(&SinX1, &gff).is_none());
    }
}
