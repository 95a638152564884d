//! Random-walk Metropolis with proposal scale `tau / sqrt(n)`.
//!
//! One step draws `n` unit-variance symmetric increments, forms the candidate
//! `y = x + tau/sqrt(n) * R`, draws one uniform `u` and accepts when
//! `u < min(1, exp(-dH))`. Increments and `u` for step `t` of chain `c` come
//! from the stream position `(seed, c, t)`; see [`crate::rng`].

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Window;
use crate::model::{Configuration, InteractionModel};
use crate::oracle;
use crate::rng::{derive_seed, StreamRng, MAX_COORDINATES};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Symmetric, mean-zero, unit-variance increment law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementFamily {
    #[default]
    StandardNormal,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    Uniform,
}

impl IncrementFamily {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            IncrementFamily::StandardNormal => rng.sample(StandardNormal),
            IncrementFamily::Uniform => SQRT3 * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub tau: f64,
    pub increments: IncrementFamily,
    pub n: usize,
}

impl ProposalSpec {
    pub fn new(tau: f64, n: usize, increments: IncrementFamily) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tau must be finite and >= 0, got {tau}"
            )));
        }
        if n == 0 || n > MAX_COORDINATES {
            return Err(Error::InvalidArgument(format!("window size {n} out of range")));
        }
        Ok(ProposalSpec { tau, increments, n })
    }

    pub fn normal(tau: f64, n: usize) -> Result<Self> {
        ProposalSpec::new(tau, n, IncrementFamily::StandardNormal)
    }

    /// Per-coordinate proposal standard deviation `tau / sqrt(n)`.
    pub fn step_sd(&self) -> f64 {
        self.tau / (self.n as f64).sqrt()
    }
}

/// Outcome of one MH step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// `H(y) - H(x)` of the proposed move, accepted or not.
    pub delta_h: f64,
    pub accepted: bool,
    pub u: f64,
    /// Squared displacement of the first coordinate; zero on rejection.
    pub jump_sq_first_coord: f64,
}

/// `min(1, exp(-dH))` without ever exponentiating a positive argument.
#[inline]
pub fn acceptance_from_delta(delta_h: f64) -> f64 {
    if delta_h <= 0.0 {
        1.0
    } else {
        (-delta_h).exp()
    }
}

/// `min(1, psi(y)/psi(x))`.
pub fn accept_prob(model: &InteractionModel, x: &Configuration, y: &Configuration) -> Result<f64> {
    Ok(acceptance_from_delta(model.delta_hamiltonian(x, y)?))
}

/// Candidate `x + tau/sqrt(n) R`; `state` is untouched.
pub fn propose<R: Rng + ?Sized>(state: &Configuration, spec: &ProposalSpec, rng: &mut R) -> Configuration {
    let mut y = state.values().to_vec();
    propose_into(state.values(), &mut y, spec, rng);
    Configuration::from_parts_unchecked(state.window().clone(), y)
}

#[inline]
fn propose_into<R: Rng + ?Sized>(x: &[f64], y: &mut [f64], spec: &ProposalSpec, rng: &mut R) {
    let sd = spec.step_sd();
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = xi + sd * spec.increments.sample(rng);
    }
}

/// One MH step from `state`. The uniform is drawn after the increments.
pub fn step<R: Rng + ?Sized>(
    model: &InteractionModel,
    state: &Configuration,
    spec: &ProposalSpec,
    rng: &mut R,
) -> Result<(Configuration, StepRecord)> {
    step_with_uniform(model, state, spec, rng, None)
}

/// [`step`] with an optional forced value for the uniform draw (the draw
/// still happens, so the stream position is unchanged).
pub fn step_with_uniform<R: Rng + ?Sized>(
    model: &InteractionModel,
    state: &Configuration,
    spec: &ProposalSpec,
    rng: &mut R,
    forced_u: Option<f64>,
) -> Result<(Configuration, StepRecord)> {
    check_spec(state.window(), spec)?;
    let y = propose(state, spec, rng);
    let delta_h = model.delta_hamiltonian(state, &y)?;
    let drawn: f64 = rng.random();
    let u = forced_u.unwrap_or(drawn);
    let accepted = u < acceptance_from_delta(delta_h);
    let jump = if accepted {
        let d = y.values()[0] - state.values()[0];
        d * d
    } else {
        0.0
    };
    let record = StepRecord {
        delta_h,
        accepted,
        u,
        jump_sq_first_coord: jump,
    };
    Ok((if accepted { y } else { state.clone() }, record))
}

fn check_spec(window: &Window, spec: &ProposalSpec) -> Result<()> {
    if spec.n != window.len() {
        return Err(Error::InvalidArgument(format!(
            "proposal is scaled for n = {} but the window has {} vertices",
            spec.n,
            window.len()
        )));
    }
    Ok(())
}

/// Which step records a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    #[default]
    Full,
    /// Every `k`-th record (steps `0, k, 2k, ...`).
    Thinned(usize),
    /// Running sums only.
    Summary,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub recording: Recording,
    /// Record the first `trace_coords` coordinates at every time `0..=steps`.
    pub trace_coords: usize,
    /// Keep a full-state snapshot at times `0, k, 2k, ...`.
    pub snapshot_every: Option<usize>,
}

impl RunOptions {
    pub fn summary() -> Self {
        RunOptions {
            recording: Recording::Summary,
            ..RunOptions::default()
        }
    }
}

/// Running sums over every step of a run, whatever the recording policy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub accepted: u64,
    pub sum_delta_h: f64,
    pub sum_delta_h_sq: f64,
    pub sum_jump_sq: f64,
}

impl RunSummary {
    fn push(&mut self, r: &StepRecord) {
        self.steps += 1;
        self.accepted += r.accepted as u64;
        self.sum_delta_h += r.delta_h;
        self.sum_delta_h_sq += r.delta_h * r.delta_h;
        self.sum_jump_sq += r.jump_sq_first_coord;
    }

    pub fn acceptance(&self) -> f64 {
        self.accepted as f64 / self.steps as f64
    }
}

/// First coordinates of the chain at every time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordTrace {
    pub width: usize,
    /// Row-major, `steps + 1` rows of `width` values.
    pub values: Vec<f64>,
}

impl CoordTrace {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.width.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub seed: u64,
    pub chain: u64,
    pub steps: u64,
    pub tau: f64,
    pub n: usize,
    pub records: Vec<StepRecord>,
    pub record_stride: usize,
    pub summary: RunSummary,
    pub trace: Option<CoordTrace>,
    pub snapshots: Vec<Vec<f64>>,
    pub final_state: Configuration,
    pub wall_time: f64,
}

impl ChainRun {
    /// Equal up to wall-clock time.
    pub fn same_output(&self, other: &ChainRun) -> bool {
        self.seed == other.seed
            && self.chain == other.chain
            && self.steps == other.steps
            && self.tau == other.tau
            && self.records == other.records
            && self.summary == other.summary
            && self.trace == other.trace
            && self.snapshots == other.snapshots
            && self.final_state == other.final_state
    }
}

/// A running chain owning its state and its random stream.
pub struct Chain<'m> {
    model: &'m InteractionModel,
    couplings: &'m [f64],
    window: Arc<Window>,
    spec: ProposalSpec,
    rng: StreamRng,
    x: Vec<f64>,
    y: Vec<f64>,
    t: u64,
}

impl<'m> Chain<'m> {
    pub fn new(
        model: &'m InteractionModel,
        start: Configuration,
        spec: ProposalSpec,
        seed: u64,
        chain: u64,
    ) -> Result<Self> {
        Chain::resume(model, start, spec, seed, chain, 0)
    }

    /// A chain whose next step is step `t`.
    pub fn resume(
        model: &'m InteractionModel,
        start: Configuration,
        spec: ProposalSpec,
        seed: u64,
        chain: u64,
        t: u64,
    ) -> Result<Self> {
        let window = start.window().clone();
        check_spec(&window, &spec)?;
        let couplings = model.couplings_for(&window)?;
        let x = start.into_values();
        let y = x.clone();
        Ok(Chain {
            model,
            couplings,
            window,
            spec,
            rng: StreamRng::new(seed, chain),
            x,
            y,
            t,
        })
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn state(&self) -> Configuration {
        Configuration::from_parts_unchecked(self.window.clone(), self.x.clone())
    }

    #[inline]
    pub fn step(&mut self) -> StepRecord {
        self.rng.seek_step(self.t);
        self.t += 1;
        propose_into(&self.x, &mut self.y, &self.spec, &mut self.rng);
        let delta_h = self.model.delta_raw(&self.window, self.couplings, &self.x, &self.y);
        let u: f64 = self.rng.random();
        let accepted = u < acceptance_from_delta(delta_h);
        let jump_sq_first_coord = if accepted {
            let d = self.y[0] - self.x[0];
            std::mem::swap(&mut self.x, &mut self.y);
            d * d
        } else {
            0.0
        };
        StepRecord {
            delta_h,
            accepted,
            u,
            jump_sq_first_coord,
        }
    }
}

/// Runs `steps` MH steps from `start` on stream `(seed, chain)`.
pub fn run_chain(
    model: &InteractionModel,
    start: Configuration,
    spec: ProposalSpec,
    steps: u64,
    seed: u64,
    chain: u64,
    options: &RunOptions,
) -> Result<ChainRun> {
    if steps == 0 {
        return Err(Error::InvalidArgument("a run needs at least one step".into()));
    }
    let clock = Instant::now();
    let mut ch = Chain::new(model, start, spec, seed, chain)?;
    let stride = match options.recording {
        Recording::Full => 1,
        Recording::Thinned(k) if k > 0 => k,
        Recording::Thinned(_) => return Err(Error::InvalidArgument("thinning interval must be positive".into())),
        Recording::Summary => 0,
    };
    let width = options.trace_coords.min(ch.values().len());
    if options.trace_coords > ch.values().len() {
        return Err(Error::CylinderTooWide {
            needed: options.trace_coords,
            available: ch.values().len(),
        });
    }
    let mut records = Vec::with_capacity(if stride > 0 {
        (steps as usize).div_ceil(stride)
    } else {
        0
    });
    let mut trace = (width > 0).then(|| {
        let mut v = Vec::with_capacity((steps as usize + 1) * width);
        v.extend_from_slice(&ch.values()[..width]);
        v
    });
    let snap_every = options.snapshot_every.filter(|&k| k > 0);
    let mut snapshots = Vec::new();
    if snap_every.is_some() {
        snapshots.push(ch.values().to_vec());
    }
    let mut summary = RunSummary::default();
    for t in 0..steps {
        let rec = ch.step();
        summary.push(&rec);
        if stride > 0 && t % stride as u64 == 0 {
            records.push(rec);
        }
        if let Some(tr) = trace.as_mut() {
            tr.extend_from_slice(&ch.values()[..width]);
        }
        if let Some(k) = snap_every {
            if (t + 1) % k as u64 == 0 {
                snapshots.push(ch.values().to_vec());
            }
        }
    }
    Ok(ChainRun {
        seed,
        chain,
        steps,
        tau: spec.tau,
        n: spec.n,
        records,
        record_stride: stride,
        summary,
        trace: trace.map(|values| CoordTrace { width, values }),
        snapshots,
        final_state: ch.state(),
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// How a chain's first state is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// Exact stationary draw; quadratic models only.
    ExactGaussian,
    /// Run the kernel from the zero configuration. `None` fields take the
    /// defaults of [`default_burn_in`].
    BurnIn {
        steps: Option<u64>,
        tau: Option<f64>,
    },
    Given(Configuration),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitQuality {
    Exact,
    Approximate,
    Given,
}

/// Stream used for initialization draws, kept apart from the chain streams.
const INIT_LABEL: u64 = 0x1a17;

/// Initial state of chain `chain` under `seed`.
pub fn init_state(
    model: &InteractionModel,
    window: &Arc<Window>,
    mode: &InitMode,
    seed: u64,
    chain: u64,
) -> Result<(Configuration, InitQuality)> {
    match mode {
        InitMode::Given(x) => {
            if !Arc::ptr_eq(x.window(), window) && **x.window() != **window {
                return Err(Error::WindowMismatch);
            }
            Ok((x.clone(), InitQuality::Given))
        }
        InitMode::ExactGaussian => {
            if !model.is_quadratic() {
                return Err(Error::NotGaussian("exact initialization"));
            }
            let sampler = oracle::GaussianSampler::new(model, window)?;
            let mut rng = StreamRng::at(derive_seed(seed, INIT_LABEL), chain, 0);
            Ok((sampler.sample(&mut rng), InitQuality::Exact))
        }
        InitMode::BurnIn { steps, tau } => {
            let n = window.len();
            let init_seed = derive_seed(seed, INIT_LABEL + 1);
            let (steps, tau) = match (steps, tau) {
                (Some(s), Some(t)) => (*s, *t),
                _ => {
                    let (s_default, t_default) = default_burn_in(model, window, init_seed, chain)?;
                    (steps.unwrap_or(s_default), tau.unwrap_or(t_default))
                }
            };
            let spec = ProposalSpec::normal(tau, n)?;
            let mut ch = Chain::new(model, Configuration::zeros(window.clone()), spec, init_seed, chain)?;
            for _ in 0..steps {
                ch.step();
            }
            Ok((ch.state(), InitQuality::Approximate))
        }
    }
}

/// Heuristic burn-in: `50 n` steps at `tau = 2.38 / s_hat`, where `s_hat`
/// comes from a `10 n`-step pilot at `tau = 1` started from zero.
pub fn default_burn_in(model: &InteractionModel, window: &Arc<Window>, seed: u64, chain: u64) -> Result<(u64, f64)> {
    let n = window.len();
    let pilot_spec = ProposalSpec::normal(1.0, n)?;
    let mut pilot = Chain::new(
        model,
        Configuration::zeros(window.clone()),
        pilot_spec,
        derive_seed(seed, 1),
        chain,
    )?;
    for _ in 0..10 * n {
        pilot.step();
    }
    let state = pilot.state();
    let grad = model.gradient(&state)?;
    let interior: Vec<f64> = window.interior().map(|k| grad[k] * grad[k]).collect();
    let pool = if interior.is_empty() {
        grad.iter().map(|g| g * g).collect()
    } else {
        interior
    };
    let s2 = pool.iter().sum::<f64>() / pool.len() as f64;
    let tau = if s2 > 0.0 && s2.is_finite() {
        2.38 / s2.sqrt()
    } else {
        1.0
    };
    Ok((50 * n as u64, tau))
}
