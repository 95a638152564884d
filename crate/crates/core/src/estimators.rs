//! Estimators over chain output: acceptance, `s^2`, energy-difference
//! moments, Dirichlet forms and jump distances, with batch-means errors.

use serde::{Deserialize, Serialize};

use crate::cylinder::CylinderFunction;
use crate::error::{Error, Result};
use crate::lattice::Window;
use crate::model::InteractionModel;
use crate::sampler::{acceptance_from_delta, CoordTrace, StepRecord};
use crate::scaling::{c_theoretical, normal_cdf};

pub const DEFAULT_BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

impl EstimateWithError {
    pub fn exact(value: f64, n_samples: u64) -> Self {
        EstimateWithError {
            value,
            std_error: 0.0,
            n_samples,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        EstimateWithError {
            value: self.value * c,
            std_error: self.std_error * c.abs(),
            n_samples: self.n_samples,
        }
    }

    /// `|self - other|` in units of the combined standard error.
    pub fn z_against(&self, other: &EstimateWithError) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        let gap = (self.value - other.value).abs();
        if se > 0.0 {
            gap / se
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn z_against_value(&self, target: f64) -> f64 {
        self.z_against(&EstimateWithError::exact(target, 0))
    }
}

/// Mean of `xs` with a batch-means standard error over `batches` equal
/// batches. Series too short for two points per batch fall back to the
/// i.i.d. formula.
pub fn batch_means(xs: &[f64], batches: usize) -> Result<EstimateWithError> {
    let n = xs.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let batches = batches.max(2);
    let std_error = if n < 2 * batches {
        if n < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        }
    } else {
        let size = n / batches;
        let used = size * batches;
        let grand = xs[..used].iter().sum::<f64>() / used as f64;
        let var_b = xs[..used]
            .chunks_exact(size)
            .map(|c| (c.iter().sum::<f64>() / size as f64 - grand).powi(2))
            .sum::<f64>()
            / (batches - 1) as f64;
        (var_b / batches as f64).sqrt()
    };
    Ok(EstimateWithError {
        value: mean,
        std_error,
        n_samples: n as u64,
    })
}

/// Pools per-replica estimates of the same quantity. The value is the plain
/// mean; the squared error averages the within-replica and between-replica
/// variance of that mean, and never drops below the within-replica part.
pub fn pool_replicas(parts: &[EstimateWithError]) -> Result<EstimateWithError> {
    let r = parts.len();
    if r == 0 {
        return Err(Error::EmptyInput);
    }
    let rf = r as f64;
    let value = parts.iter().map(|p| p.value).sum::<f64>() / rf;
    let within = parts.iter().map(|p| p.std_error.powi(2)).sum::<f64>() / (rf * rf);
    let std_error = if r < 2 {
        within.sqrt()
    } else {
        let between = parts.iter().map(|p| (p.value - value).powi(2)).sum::<f64>() / ((rf - 1.0) * rf);
        within.max(0.5 * (within + between)).sqrt()
    };
    Ok(EstimateWithError {
        value,
        std_error,
        n_samples: parts.iter().map(|p| p.n_samples).sum(),
    })
}

pub fn acceptance_rate(records: &[StepRecord]) -> Result<EstimateWithError> {
    let xs: Vec<f64> = records.iter().map(|r| r.accepted as u8 as f64).collect();
    batch_means(&xs, DEFAULT_BATCHES)
}

/// Acceptance recomputed from the stored `(u, dH)` pairs; equals
/// [`acceptance_rate`] when the records are consistent.
pub fn acceptance_from_uniforms(records: &[StepRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = records
        .iter()
        .filter(|r| r.u < acceptance_from_delta(r.delta_h))
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Spatial average of `(D_k H)^2` over interior vertices of one state.
pub fn spatial_s2(model: &InteractionModel, window: &Window, values: &[f64]) -> Result<f64> {
    let js = model.couplings_for(window)?;
    if values.len() != window.len() {
        return Err(Error::LengthMismatch {
            expected: window.len(),
            got: values.len(),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in window.interior() {
        let g = model.grad_raw(window, js, values, k);
        sum += g * g;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyInterior);
    }
    Ok(sum / count as f64)
}

/// `s^2` estimate: spatial average over interior vertices, then a time
/// average over the given states with a batch-means error.
pub fn estimate_s2(model: &InteractionModel, window: &Window, states: &[Vec<f64>]) -> Result<EstimateWithError> {
    if window.interior().next().is_none() {
        return Err(Error::EmptyInterior);
    }
    let per_state = states
        .iter()
        .map(|x| spatial_s2(model, window, x))
        .collect::<Result<Vec<_>>>()?;
    batch_means(&per_state, DEFAULT_BATCHES)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaHStats {
    pub mean: EstimateWithError,
    pub variance: EstimateWithError,
}

/// Mean and variance of proposed-move energy differences.
pub fn delta_h_stats(records: &[StepRecord]) -> Result<DeltaHStats> {
    let dh: Vec<f64> = records.iter().map(|r| r.delta_h).collect();
    let mean = batch_means(&dh, DEFAULT_BATCHES)?;
    let sq: Vec<f64> = dh.iter().map(|x| (x - mean.value).powi(2)).collect();
    let mut variance = batch_means(&sq, DEFAULT_BATCHES)?;
    if dh.len() > 1 {
        // unbiased scaling
        let c = dh.len() as f64 / (dh.len() - 1) as f64;
        variance = variance.scaled(c);
    }
    Ok(DeltaHStats { mean, variance })
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    }))
}

/// KS distance of the standardized sample `(x - mean) / sd` to `N(0, 1)`.
pub fn ks_standard_normal(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Ok(1.0);
    }
    let z: Vec<f64> = xs.iter().map(|x| (x - mean) / sd).collect();
    ks_statistic(&z, normal_cdf)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// `(n/2) * mean_t [f(X(t+1)) - f(X(t))]^2` over a coordinate trace.
pub fn dirichlet_form_empirical(f: &dyn CylinderFunction, trace: &CoordTrace, n: usize) -> Result<EstimateWithError> {
    if f.arity() > n {
        return Err(Error::CylinderTooWide {
            needed: f.arity(),
            available: n,
        });
    }
    if f.arity() > trace.width {
        return Err(Error::CylinderTooWide {
            needed: f.arity(),
            available: trace.width,
        });
    }
    if trace.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let vals: Vec<f64> = trace.rows().map(|x| f.eval(x)).collect();
    let sq: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).powi(2)).collect();
    Ok(batch_means(&sq, DEFAULT_BATCHES)?.scaled(0.5 * n as f64))
}

/// `(tau^2 c(tau) / 2) * mean |grad f|^2` over stationary samples of the
/// leading coordinates.
pub fn limiting_form<'a, I>(f: &dyn CylinderFunction, tau: f64, s_hat: f64, samples: I) -> Result<EstimateWithError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let g: Vec<f64> = samples.into_iter().map(|x| f.grad_norm_sq(x)).collect();
    let speed = tau * tau * c_theoretical(tau, s_hat);
    if speed == 0.0 {
        return Ok(EstimateWithError::exact(0.0, g.len() as u64));
    }
    Ok(batch_means(&g, DEFAULT_BATCHES)?.scaled(0.5 * speed))
}

/// `n * mean(jump_sq_first_coord)`.
pub fn esjd_first_coord(records: &[StepRecord], n: usize) -> Result<EstimateWithError> {
    let xs: Vec<f64> = records.iter().map(|r| r.jump_sq_first_coord).collect();
    Ok(batch_means(&xs, DEFAULT_BATCHES)?.scaled(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::{Constant, SinX1};
    use crate::lattice::BoundaryMode;
    use crate::rng::StreamRng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn rec(delta_h: f64, accepted: bool, jump: f64) -> StepRecord {
        StepRecord {
            delta_h,
            accepted,
            u: if accepted { 0.0 } else { 1.0 },
            jump_sq_first_coord: jump,
        }
    }

    #[test]
    fn batch_means_iid_error_scales() {
        let mut rng = StreamRng::new(1, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let full = batch_means(&xs, 50).unwrap();
        let half = batch_means(&xs[..25_000], 50).unwrap();
        assert!((full.std_error - 1.0 / 100_000f64.sqrt()).abs() < 0.35 * full.std_error);
        let ratio = half.std_error / full.std_error;
        assert!(ratio > 1.4 && ratio < 2.8, "{ratio}");
        assert_eq!(batch_means(&[], 50), Err(Error::EmptyInput));
        assert_eq!(batch_means(&[3.0], 50).unwrap().std_error, 0.0);
    }

    #[test]
    fn pooling() {
        let e = |v: f64, s: f64| EstimateWithError {
            value: v,
            std_error: s,
            n_samples: 10,
        };
        let p = pool_replicas(&[e(1.0, 0.1), e(1.0, 0.1)]).unwrap();
        assert_eq!(p.value, 1.0);
        assert!((p.std_error - 0.005f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.n_samples, 20);
        let spread = pool_replicas(&[e(0.0, 0.1), e(2.0, 0.1)]).unwrap();
        assert!((spread.std_error - 0.5025f64.sqrt()).abs() < 1e-15);
        assert!(pool_replicas(&[]).is_err());
    }

    #[test]
    fn acceptance_examples() {
        let all = vec![rec(0.3, true, 0.1); 10];
        assert_eq!(acceptance_rate(&all).unwrap().value, 1.0);
        let mixed = vec![rec(1.0, true, 0.1), rec(2.0, false, 0.0)];
        assert_eq!(acceptance_rate(&mixed).unwrap().value, 0.5);
        assert_eq!(acceptance_from_uniforms(&mixed).unwrap(), 0.5);
        assert!(acceptance_rate(&[]).is_err());
    }

    #[test]
    fn esjd_and_delta_h_trivia() {
        let rejected = vec![rec(5.0, false, 0.0); 20];
        assert_eq!(esjd_first_coord(&rejected, 100).unwrap().value, 0.0);
        let still = vec![rec(0.0, true, 0.0); 20];
        let st = delta_h_stats(&still).unwrap();
        assert_eq!((st.mean.value, st.variance.value), (0.0, 0.0));
        assert!(delta_h_stats(&[]).is_err());
    }

    #[test]
    fn s2_trivia() {
        let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
        let w = Window::with_size(1, 5, m.neighborhood(), BoundaryMode::Zero).unwrap();
        let zero = vec![vec![0.0; 5]; 3];
        assert_eq!(estimate_s2(&m, &w, &zero).unwrap().value, 0.0);
        let one = vec![vec![1.0, -1.0, 2.0, 0.0, 1.0]];
        assert!((estimate_s2(&m, &w, &one).unwrap().value - 7.0 / 5.0).abs() < 1e-15);
        let g = InteractionModel::gff(1.0, 1.0, 1).unwrap();
        let tiny = Window::with_size(1, 2, g.neighborhood(), BoundaryMode::Zero).unwrap();
        assert_eq!(estimate_s2(&g, &tiny, &[vec![0.0, 0.0]]), Err(Error::EmptyInterior));
    }

    #[test]
    fn ks_examples() {
        let mut rng = StreamRng::new(2, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_standard_normal(&xs).unwrap() < ks_critical_1pct(xs.len()));
        let ys: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_statistic(&ys, normal_cdf).unwrap() > 0.4);
        // exact KS of a single point at the median
        assert!((ks_statistic(&[0.0], normal_cdf).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_trivia() {
        let still = CoordTrace {
            width: 1,
            values: vec![0.4; 101],
        };
        assert_eq!(dirichlet_form_empirical(&SinX1, &still, 10).unwrap().value, 0.0);
        let moving = CoordTrace {
            width: 1,
            values: (0..101).map(|i| i as f64 * 0.1).collect(),
        };
        assert_eq!(
            dirichlet_form_empirical(&Constant(2.0), &moving, 10).unwrap().value,
            0.0
        );
        assert!(matches!(
            dirichlet_form_empirical(&SinX1, &moving, 0),
            Err(Error::CylinderTooWide { .. })
        ));
        let rows: Vec<&[f64]> = moving.rows().collect();
        assert_eq!(
            limiting_form(&Constant(1.0), 2.38, 1.0, rows.iter().copied())
                .unwrap()
                .value,
            0.0
        );
        assert_eq!(limiting_form(&SinX1, 0.0, 1.0, rows).unwrap().value, 0.0);
    }
}
