//! Independent reference computations: exact Gaussian windows via dense
//! linear algebra, and quadrature for one- and two-site chains.
//!
//! Nothing here reuses the sampler's energy-difference code path, so the
//! results can be used to check it.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Site, Window};
use crate::model::{Configuration, InteractionModel};
use crate::quadrature::{gauss_hermite_normal, gauss_legendre, Rule};

/// Precision matrix `Q` and linear term `b` of a quadratic window
/// Hamiltonian `H(x) = 1/2 x^T Q x - b^T x + constant`.
#[derive(Debug, Clone)]
pub struct PrecisionMatrix {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub constant: f64,
    window: Arc<Window>,
}

impl PrecisionMatrix {
    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.q * &x)) - self.b.dot(&x) + self.constant
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.q.clone()).ok_or(Error::NotPositiveDefinite)
    }

    /// `Q^{-1}`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(self.cholesky()?.inverse())
    }

    /// `Q^{-1} b`.
    pub fn mean(&self) -> Result<DVector<f64>> {
        Ok(self.cholesky()?.solve(&self.b))
    }
}

/// Assembles `Q`, `b` by expanding every site energy term by term.
pub fn build_precision(model: &InteractionModel, window: &Arc<Window>) -> Result<PrecisionMatrix> {
    if !model.is_quadratic() {
        return Err(Error::NotGaussian("precision matrix"));
    }
    let js = model.couplings_for(window)?;
    let poly = model.self_energy();
    let c0 = poly.first().copied().unwrap_or(0.0);
    let c1 = poly.get(1).copied().unwrap_or(0.0);
    let c2 = poly.get(2).copied().unwrap_or(0.0);
    let n = window.len();
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let mut constant = 0.0;
    for k in 0..n {
        // u(x) = c0 + c1 x + c2 x^2
        q[(k, k)] += 2.0 * c2;
        b[k] -= c1;
        constant += c0;
        for link in window.links(k) {
            let j_coupling = js[link.slot];
            match link.site {
                // 1/4 J (x_k - x_j)^2
                Site::Inside(j) => {
                    q[(k, k)] += 0.5 * j_coupling;
                    q[(j, j)] += 0.5 * j_coupling;
                    q[(k, j)] -= 0.5 * j_coupling;
                    q[(j, k)] -= 0.5 * j_coupling;
                }
                // 1/4 J (x_k - z)^2 = 1/4 J x_k^2 - 1/2 J z x_k + 1/4 J z^2
                Site::Fixed(z) => {
                    q[(k, k)] += 0.5 * j_coupling;
                    b[k] += 0.5 * j_coupling * z;
                    constant += 0.25 * j_coupling * z * z;
                }
                Site::Dropped => {}
            }
        }
    }
    let out = PrecisionMatrix {
        q,
        b,
        constant,
        window: window.clone(),
    };
    out.cholesky()?;
    Ok(out)
}

/// Exact sampler for a quadratic window model: `x = mean + L^{-T} z` with
/// `L L^T = Q`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    upper: DMatrix<f64>,
    mean: DVector<f64>,
    window: Arc<Window>,
}

impl GaussianSampler {
    pub fn new(model: &InteractionModel, window: &Arc<Window>) -> Result<Self> {
        GaussianSampler::from_precision(&build_precision(model, window)?)
    }

    pub fn from_precision(p: &PrecisionMatrix) -> Result<Self> {
        let chol = p.cholesky()?;
        let mean = chol.solve(&p.b);
        Ok(GaussianSampler {
            upper: chol.l().transpose(),
            mean,
            window: p.window.clone(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let n = self.mean.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = self
            .upper
            .solve_upper_triangular(&z)
            .expect("cholesky factor has a positive diagonal");
        Configuration::from_parts_unchecked(self.window.clone(), (x + &self.mean).as_slice().to_vec())
    }
}

/// One exact draw from the Gaussian window model with precision `p`.
pub fn gaussian_exact_sample<R: Rng + ?Sized>(p: &PrecisionMatrix, rng: &mut R) -> Result<Configuration> {
    Ok(GaussianSampler::from_precision(p)?.sample(rng))
}

/// Interior vertex nearest the centroid of the window.
pub fn central_interior_vertex(window: &Window) -> Result<usize> {
    let dim = window.dim();
    let n = window.len() as f64;
    let mut centroid = vec![0.0; dim];
    for v in window.vertices() {
        for (c, &x) in centroid.iter_mut().zip(v.coords()) {
            *c += x as f64 / n;
        }
    }
    window
        .interior()
        .min_by(|&a, &b| {
            let d = |k: usize| -> f64 {
                window
                    .vertex(k)
                    .coords()
                    .iter()
                    .zip(&centroid)
                    .map(|(&x, c)| (x as f64 - c).powi(2))
                    .sum()
            };
            d(a).total_cmp(&d(b)).then(a.cmp(&b))
        })
        .ok_or(Error::EmptyInterior)
}

/// `E[(D_k H)^2]` at the central interior vertex `k`. The gradient there is
/// `a^T (x - mean)` with `a` the `k`-th row of `Q`, so the expectation is
/// `a^T Q^{-1} a`.
pub fn gaussian_s2_exact(model: &InteractionModel, window: &Arc<Window>) -> Result<f64> {
    let p = build_precision(model, window)?;
    let k = central_interior_vertex(window)?;
    let a: DVector<f64> = p.q.column(k).into_owned();
    let sol = p.cholesky()?.solve(&a);
    Ok(a.dot(&sol))
}

/// Truncation radius for standard normal increments; `P(|Z| > 9) < 3e-19`.
const R_MAX: f64 = 9.0;

/// Expected one-step acceptance `E[min(1, exp(-dH))]` for a one- or two-site
/// window started in stationarity, with standard normal increments scaled by
/// `tau / sqrt(n)`, by nested quadrature. Grids are doubled until two
/// successive levels agree to `2e-5`; each doubling cuts the error by a
/// factor of eight or more, so the returned finer level is well inside
/// `1e-5`.
pub fn quad_acceptance(model: &InteractionModel, window: &Arc<Window>, tau: f64) -> Result<f64> {
    let n = window.len();
    if !(1..=2).contains(&n) {
        return Err(Error::QuadratureDimension(n));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tau must be finite and >= 0, got {tau}"
        )));
    }
    if tau == 0.0 {
        return Ok(1.0);
    }
    let q = QuadTarget::new(model, window)?;
    let sigma = tau / (n as f64).sqrt();
    let mut level = 0;
    let mut prev = q.acceptance(sigma, level);
    loop {
        level += 1;
        let next = q.acceptance(sigma, level);
        if (next - prev).abs() < 2e-5 || level >= 3 {
            return Ok(next);
        }
        prev = next;
    }
}

struct QuadTarget<'a> {
    model: &'a InteractionModel,
    window: &'a Arc<Window>,
    couplings: &'a [f64],
    lo: Vec<f64>,
    hi: Vec<f64>,
    h_min: f64,
}

impl<'a> QuadTarget<'a> {
    fn new(model: &'a InteractionModel, window: &'a Arc<Window>) -> Result<Self> {
        let couplings = model.couplings_for(window)?;
        let n = window.len();
        let mut s = QuadTarget {
            model,
            window,
            couplings,
            lo: vec![0.0; n],
            hi: vec![0.0; n],
            h_min: 0.0,
        };
        // coarse grid search for the mode
        let mut best = vec![0.0; n];
        let mut best_h = s.energy(&best);
        let grid: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.05).collect();
        if n == 1 {
            for &a in &grid {
                let h = s.energy(&[a]);
                if h < best_h {
                    best_h = h;
                    best = vec![a];
                }
            }
        } else {
            for &a in grid.iter().step_by(4) {
                for &c in grid.iter().step_by(4) {
                    let h = s.energy(&[a, c]);
                    if h < best_h {
                        best_h = h;
                        best = vec![a, c];
                    }
                }
            }
        }
        s.h_min = best_h;
        // walk out along each axis until the density ratio falls below e^-45
        for i in 0..n {
            for dir in [-1.0, 1.0] {
                let mut t = 0.0;
                loop {
                    t += 0.05;
                    let mut p = best.clone();
                    p[i] += dir * t;
                    if s.energy(&p) - best_h > 45.0 || t > 1e3 {
                        break;
                    }
                }
                let edge = best[i] + dir * (1.5 * t + 0.5);
                if dir < 0.0 {
                    s.lo[i] = edge;
                } else {
                    s.hi[i] = edge;
                }
            }
        }
        Ok(s)
    }

    /// Direct sum of site energies.
    fn energy(&self, x: &[f64]) -> f64 {
        let (model, js, window) = (self.model, self.couplings, self.window);
        let mut e = 0.0;
        for (k, &xk) in x.iter().enumerate() {
            e += model.u(xk);
            for link in window.links(k) {
                let xj = match link.site {
                    Site::Inside(j) => x[j],
                    Site::Fixed(z) => z,
                    Site::Dropped => continue,
                };
                e += 0.25 * js[link.slot] * (xk - xj).powi(2);
            }
        }
        e
    }

    /// Sorted breakpoints for the outer integral of a one-site window: the
    /// stationary points of the energy, and every level crossing of a
    /// stationary value. The set `{r : dH(r) < 0}` changes shape there, so the
    /// inner average has a kink.
    fn outer_breaks_1d(&self) -> Vec<f64> {
        let (lo, hi) = (self.lo[0], self.hi[0]);
        let slope = |x: f64| {
            let h = 1e-6 * (1.0 + x.abs());
            self.energy(&[x + h]) - self.energy(&[x - h])
        };
        let mut out = vec![lo, hi];
        let stationary = sign_changes(&slope, lo, hi, 4000);
        for &c in &stationary {
            let level = self.energy(&[c]);
            out.extend(sign_changes(&|x: f64| self.energy(&[x]) - level, lo, hi, 4000));
        }
        out.extend(stationary);
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        out
    }

    fn acceptance(&self, sigma: f64, level: u32) -> f64 {
        let outer_panels = 12usize << level;
        let rule = gauss_legendre(8);
        let inner = InnerRule::new(level, self.model.self_energy().len().saturating_sub(1));
        if self.lo.len() == 1 {
            // the inner average has a kink wherever the energy is stationary
            let cuts = self.outer_breaks_1d();
            let mut num = 0.0;
            let mut den = 0.0;
            for piece in cuts.windows(2) {
                let panels = (outer_panels as f64 * (piece[1] - piece[0]) / (self.hi[0] - self.lo[0])).ceil() as usize;
                for (x, wx) in panel_nodes(&rule, piece[0], piece[1], panels.max(2)) {
                    let h0 = self.energy(&[x]);
                    let w = wx * (-(h0 - self.h_min)).exp();
                    num += w * inner.line(|r| self.energy(&[x + sigma * r]) - h0);
                    den += w;
                }
            }
            num / den
        } else {
            let outer_panels = 6usize << level;
            let pts0: Vec<(f64, f64)> = panel_nodes(&rule, self.lo[0], self.hi[0], outer_panels);
            let pts1: Vec<(f64, f64)> = panel_nodes(&rule, self.lo[1], self.hi[1], outer_panels);
            let (num, den) = pts0
                .par_iter()
                .map(|&(a, wa)| {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for &(c, wc) in &pts1 {
                        let h0 = self.energy(&[a, c]);
                        let rel = (-(h0 - self.h_min)).exp();
                        if rel < 1e-18 {
                            continue;
                        }
                        let w = wa * wc * rel;
                        num += w * inner.plane(|r0, r1| self.energy(&[a + sigma * r0, c + sigma * r1]) - h0);
                        den += w;
                    }
                    (num, den)
                })
                .collect::<Vec<_>>()
                .into_iter()
                .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
            num / den
        }
    }
}

/// Sign changes of `f` on `[a, b]` located by a uniform scan and bisection.
fn sign_changes<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, scan: usize) -> Vec<f64> {
    let h = (b - a) / scan as f64;
    let mut out = Vec::new();
    let mut x0 = a;
    let mut f0 = f(a);
    for i in 1..=scan {
        let x1 = a + h * i as f64;
        let f1 = f(x1);
        if (f0 <= 0.0) != (f1 <= 0.0) {
            let (mut l, mut r) = (x0, x1);
            for _ in 0..60 {
                let m = 0.5 * (l + r);
                if (f(m) <= 0.0) == (f0 <= 0.0) {
                    l = m;
                } else {
                    r = m;
                }
            }
            out.push(0.5 * (l + r));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

fn panel_nodes(rule: &Rule, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let lo = a + h * p as f64;
            rule.mapped(lo, lo + h).collect::<Vec<_>>()
        })
        .collect()
}

/// Integrates `min(1, exp(-dH))` against the increment law, splitting at the
/// sign changes of `dH` so each piece is smooth. Every model here has a
/// polynomial energy, so along a line `dH` is a polynomial in the step
/// length of known degree; its real roots come from a companion matrix.
struct InnerRule {
    rule: Rule,
    panels: usize,
    angles: usize,
    degree: usize,
}

impl InnerRule {
    fn new(level: u32, degree: usize) -> Self {
        InnerRule {
            rule: gauss_legendre(12),
            panels: 4 << level,
            angles: 24 << level,
            degree: degree.max(2),
        }
    }

    fn accept(dh: f64) -> f64 {
        if dh <= 0.0 {
            1.0
        } else {
            (-dh).exp()
        }
    }

    /// `[a, roots of dh in (a, b)..., b]`, where `dh(0) = 0` and one of `a`,
    /// `b` is zero.
    fn roots<F: Fn(f64) -> f64>(&self, dh: &F, a: f64, b: f64) -> Vec<f64> {
        let d = self.degree;
        // interpolate dh on Chebyshev nodes in [-1, 1]; exact for degree d
        let nodes: Vec<f64> = (0..=d)
            .map(|j| (PI * (j as f64 + 0.5) / (d + 1) as f64).cos())
            .collect();
        let vander = DMatrix::from_fn(d + 1, d + 1, |i, j| nodes[i].powi(j as i32));
        let vals = DVector::from_iterator(d + 1, nodes.iter().map(|&r| dh(r)));
        let coef = vander.lu().solve(&vals).expect("Chebyshev Vandermonde is invertible");
        // dh(r) / r has coefficients coef[1..]; trim a vanishing top
        let mut g: Vec<f64> = coef.iter().skip(1).copied().collect();
        let scale = g.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        while g.len() > 1 && g.last().is_some_and(|c| c.abs() <= 1e-13 * scale) {
            g.pop();
        }
        let mut out = vec![a];
        if g.len() >= 2 {
            let m = g.len() - 1;
            let lead = g[m];
            let companion = DMatrix::from_fn(m, m, |i, j| {
                if i == 0 {
                    -g[m - 1 - j] / lead
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            let slope = |r: f64| g.iter().rev().fold(0.0, |acc, c| acc * r + c);
            let mut real: Vec<f64> = companion
                .complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
                .map(|z| {
                    // polish on the interpolant
                    let mut r = z.re;
                    for _ in 0..4 {
                        let h = 1e-7 * (1.0 + r.abs());
                        let d1 = (slope(r + h) - slope(r - h)) / (2.0 * h);
                        if d1 != 0.0 {
                            r -= slope(r) / d1;
                        }
                    }
                    r
                })
                .filter(|&r| r > a.min(b) && r < a.max(b))
                .collect();
            real.sort_by(f64::total_cmp);
            real.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
            if a > b {
                real.reverse();
            }
            out.extend(real);
        }
        out.push(b);
        out
    }

    fn smooth_pieces<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(&self, dh: &F, weight: &G, a: f64, b: f64) -> f64 {
        let cuts = self.roots(dh, a, b);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += self
                .rule
                .composite(w[0], w[1], self.panels, |r| weight(r) * InnerRule::accept(dh(r)));
        }
        total
    }

    /// `int phi(r) min(1, exp(-dH(r))) dr` over the real line.
    fn line<F: Fn(f64) -> f64>(&self, dh: F) -> f64 {
        let phi = |r: f64| (-0.5 * r * r).exp() / (2.0 * PI).sqrt();
        self.smooth_pieces(&dh, &phi, -R_MAX, 0.0) + self.smooth_pieces(&dh, &phi, 0.0, R_MAX)
    }

    /// Same over the plane with the standard bivariate normal, in polar form.
    fn plane<F: Fn(f64, f64) -> f64>(&self, dh: F) -> f64 {
        let m = self.angles;
        let mut total = 0.0;
        for i in 0..m {
            let theta = 2.0 * PI * (i as f64 + 0.5) / m as f64;
            let (s, c) = theta.sin_cos();
            let radial = |rho: f64| dh(rho * c, rho * s);
            let weight = |rho: f64| rho * (-0.5 * rho * rho).exp();
            total += self.smooth_pieces(&radial, &weight, 0.0, R_MAX);
        }
        total / m as f64
    }
}

/// A one-dimensional law to integrate against.
pub enum Density1d<'a> {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Unnormalized density supported (numerically) on `[lo, hi]`.
    Unnormalized {
        density: &'a dyn Fn(f64) -> f64,
        lo: f64,
        hi: f64,
    },
}

/// `E[g(X)]` by composite Gauss–Legendre, doubling panels until two levels
/// agree to `1e-12`.
pub fn quad_expectation_1d<G: Fn(f64) -> f64>(g: G, density: &Density1d<'_>) -> f64 {
    let rule = gauss_legendre(16);
    let (lo, hi, pdf): (f64, f64, Box<dyn Fn(f64) -> f64 + '_>) = match density {
        Density1d::Normal { mean, sd } => {
            let (m, s) = (*mean, *sd);
            (
                m - 14.0 * s,
                m + 14.0 * s,
                Box::new(move |x: f64| (-0.5 * ((x - m) / s).powi(2)).exp()),
            )
        }
        Density1d::Unnormalized { density, lo, hi } => (*lo, *hi, Box::new(|x: f64| density(x))),
    };
    let eval = |panels: usize| {
        let num = rule.composite(lo, hi, panels, |x| pdf(x) * g(x));
        let den = rule.composite(lo, hi, panels, &pdf);
        num / den
    };
    let mut panels = 8;
    let mut prev = eval(panels);
    loop {
        panels *= 2;
        let next = eval(panels);
        if (next - prev).abs() < 1e-12 || panels >= 4096 {
            return next;
        }
        prev = next;
    }
}

/// `E[g(X)]` for `X ~ N(mean, sd^2)` by an `order`-point Gauss–Hermite rule.
pub fn gauss_hermite_expectation<G: Fn(f64) -> f64>(g: G, mean: f64, sd: f64, order: usize) -> f64 {
    let rule = gauss_hermite_normal(order);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&z, &w)| w * g(mean + sd * z))
        .sum()
}

/// Outcome of the discretized detailed-balance check.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailedBalanceReport {
    pub transitions: u64,
    pub cells_checked: usize,
    /// Largest `|N_ij - N_ji| / sqrt(N_ij + N_ji)` over cell pairs.
    pub max_z: f64,
    /// Largest standardized gap between visit frequencies and quadrature
    /// cell masses of the stationary law.
    pub max_occupancy_z: f64,
    pub passed: bool,
}

/// Runs a one-site chain, bins consecutive states into `bins` cells on
/// `[lo, hi]` and checks that the transition count matrix is symmetric
/// (`pi(i) P(i->j) = pi(j) P(j->i)`) and that cell visit frequencies match
/// the stationary masses computed by quadrature.
pub fn detailed_balance_check(
    model: &InteractionModel,
    window: &Arc<Window>,
    tau: f64,
    steps: u64,
    seed: u64,
    bins: usize,
    z_crit: f64,
) -> Result<DetailedBalanceReport> {
    use crate::sampler::{Chain, ProposalSpec};

    if window.len() != 1 {
        return Err(Error::QuadratureDimension(window.len()));
    }
    let target = QuadTarget::new(model, window)?;
    // bin the region where the density is within e^-9 of its peak
    let bulk: Vec<f64> = {
        let (a, b) = (target.lo[0], target.hi[0]);
        (0..=4000)
            .map(|i| a + (b - a) * i as f64 / 4000.0)
            .filter(|&x| target.energy(&[x]) - target.h_min < 9.0)
            .collect()
    };
    let (lo, hi) = (bulk[0], bulk[bulk.len() - 1]);
    let width = (hi - lo) / bins as f64;
    let cell = |x: f64| -> Option<usize> {
        let c = ((x - lo) / width).floor();
        (c >= 0.0 && c < bins as f64).then_some(c as usize)
    };
    let start = crate::model::Configuration::zeros(window.clone());
    let spec = ProposalSpec::normal(tau, 1)?;
    let mut chain = Chain::new(model, start, spec, seed, 0)?;
    // burn in from zero; one-site chains mix in a few hundred steps
    for _ in 0..2_000 {
        chain.step();
    }
    let mut counts = vec![0u64; bins * bins];
    let mut path = Vec::with_capacity(steps as usize);
    let mut prev = cell(chain.values()[0]);
    for _ in 0..steps {
        chain.step();
        let next = cell(chain.values()[0]);
        if let (Some(i), Some(j)) = (prev, next) {
            counts[i * bins + j] += 1;
        }
        path.push(next);
        prev = next;
    }
    let mut max_z: f64 = 0.0;
    let mut checked = 0;
    for i in 0..bins {
        for j in (i + 1)..bins {
            let (a, b) = (counts[i * bins + j] as f64, counts[j * bins + i] as f64);
            if a + b >= 20.0 {
                checked += 1;
                max_z = max_z.max((a - b).abs() / (a + b).sqrt());
            }
        }
    }
    // stationary cell masses by quadrature
    let rule = gauss_legendre(16);
    let masses: Vec<f64> = (0..bins)
        .map(|c| {
            let a = lo + width * c as f64;
            rule.composite(a, a + width, 1, |x| (-(target.energy(&[x]) - target.h_min)).exp())
        })
        .collect();
    let total_mass: f64 = masses.iter().sum();
    let mut max_occupancy_z: f64 = 0.0;
    for (c, m) in masses.iter().enumerate() {
        let p = m / total_mass;
        if p < 1e-3 {
            continue;
        }
        let hits: Vec<f64> = path.iter().map(|&k| (k == Some(c)) as u8 as f64).collect();
        let est = crate::estimators::batch_means(&hits, crate::estimators::DEFAULT_BATCHES)?;
        max_occupancy_z = max_occupancy_z.max(est.z_against_value(p));
    }
    Ok(DetailedBalanceReport {
        transitions: counts.iter().sum(),
        cells_checked: checked,
        max_z,
        max_occupancy_z,
        passed: max_z < z_crit && max_occupancy_z < z_crit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{BoundaryMode, Neighborhood};
    use crate::rng::StreamRng;

    fn gff_line(n: usize, coupling: f64, mass2: f64) -> (InteractionModel, Arc<Window>) {
        let m = InteractionModel::gff(coupling, mass2, 1).unwrap();
        let w = Arc::new(Window::with_size(1, n, m.neighborhood(), BoundaryMode::Zero).unwrap());
        (m, w)
    }

    #[test]
    fn identity_precision_for_product() {
        let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
        let w = Arc::new(Window::with_size(1, 3, m.neighborhood(), BoundaryMode::Zero).unwrap());
        let p = build_precision(&m, &w).unwrap();
        assert_eq!(p.q, DMatrix::identity(3, 3));
        assert_eq!(p.b, DVector::zeros(3));
    }

    #[test]
    fn massless_line_precision() {
        // each inside edge carries J/2 (dx)^2 => Hessian 1 per endpoint;
        // an edge to the frozen outside carries J/4 (dx)^2 => Hessian 1/2
        let (m, w) = gff_line(3, 1.0, 0.0);
        let p = build_precision(&m, &w).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.5, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.5]);
        assert_eq!(p.q, want);
        assert!(p.cholesky().is_ok());
    }

    #[test]
    fn quadratic_form_reproduces_hamiltonian() {
        let m = InteractionModel::gff(0.7, 0.4, 2).unwrap();
        let w = Arc::new(Window::build_box(2, 2, m.neighborhood(), BoundaryMode::Constant(0.8)).unwrap());
        let p = build_precision(&m, &w).unwrap();
        let mut rng = StreamRng::new(3, 0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..w.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let cfg = Configuration::new(w.clone(), x.clone()).unwrap();
            let h = m.hamiltonian(&cfg).unwrap();
            assert!((h - p.quadratic_form(&x)).abs() < 1e-9 * (1.0 + h.abs()));
        }
        assert!((&p.q - p.q.transpose()).amax() < 1e-12);
    }

    #[test]
    fn non_quadratic_rejected() {
        let m = InteractionModel::phi4(1.0, 0.0, 1.0, 1).unwrap();
        let w = Arc::new(Window::with_size(1, 3, m.neighborhood(), BoundaryMode::Zero).unwrap());
        assert!(matches!(build_precision(&m, &w), Err(Error::NotGaussian(_))));
        assert!(gaussian_s2_exact(&m, &w).is_err());
    }

    #[test]
    fn exact_sample_reproducible() {
        let (m, w) = gff_line(5, 1.0, 1.0);
        let p = build_precision(&m, &w).unwrap();
        let a = gaussian_exact_sample(&p, &mut StreamRng::new(1, 0)).unwrap();
        let b = gaussian_exact_sample(&p, &mut StreamRng::new(1, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_sample_covariance_matches_inverse_precision() {
        let (m, w) = gff_line(3, 1.0, 0.0);
        let p = build_precision(&m, &w).unwrap();
        let cov = p.covariance().unwrap();
        let sampler = GaussianSampler::from_precision(&p).unwrap();
        let mut rng = StreamRng::new(2024, 0);
        let draws = 100_000;
        let mut sum = [[0.0f64; 3]; 3];
        let mut sum4 = [[0.0f64; 3]; 3];
        for _ in 0..draws {
            let x = sampler.sample(&mut rng);
            let v = x.values();
            for i in 0..3 {
                for j in 0..3 {
                    sum[i][j] += v[i] * v[j];
                    sum4[i][j] += (v[i] * v[j]).powi(2);
                }
            }
        }
        let nd = draws as f64;
        for i in 0..3 {
            for j in 0..3 {
                let mean = sum[i][j] / nd;
                let se = ((sum4[i][j] / nd - mean * mean) / nd).sqrt();
                assert!(
                    (mean - cov[(i, j)]).abs() < 3.0 * se,
                    "entry ({i},{j}): {mean} vs {}",
                    cov[(i, j)]
                );
            }
        }
        // lag-one correlation of the tridiagonal example
        let rho = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
        assert!(rho > 0.0 && rho < 1.0);
    }

    #[test]
    fn s2_exact_examples() {
        let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
        let w = Arc::new(Window::with_size(1, 3, m.neighborhood(), BoundaryMode::Zero).unwrap());
        assert!((gaussian_s2_exact(&m, &w).unwrap() - 1.0).abs() < 1e-12);
        // E[(Q_k (x - mu))^2] = Q_kk for any quadratic window
        let (m, w) = gff_line(41, 1.0, 1.0);
        assert!((gaussian_s2_exact(&m, &w).unwrap() - 3.0).abs() < 1e-10);
        // H -> lambda H scales the gradient by lambda and the covariance by
        // 1/lambda, so s^2 scales by lambda; at a fixed law it is lambda^2
        let lam = 2.5;
        let scaled = InteractionModel::gff(lam, lam, 1).unwrap();
        let ratio = gaussian_s2_exact(&scaled, &w).unwrap() / gaussian_s2_exact(&m, &w).unwrap();
        assert!((ratio - lam).abs() < 1e-10);
        let p = build_precision(&m, &w).unwrap();
        let k = central_interior_vertex(&w).unwrap();
        let a: DVector<f64> = p.q.column(k) * lam;
        let fixed_law = a.dot(&(p.covariance().unwrap() * &a));
        assert!((fixed_law / gaussian_s2_exact(&m, &w).unwrap() - lam * lam).abs() < 1e-10);
        // no interior
        let tiny = Arc::new(Window::with_size(1, 2, m.neighborhood(), BoundaryMode::Zero).unwrap());
        assert_eq!(gaussian_s2_exact(&m, &tiny), Err(Error::EmptyInterior));
    }

    #[test]
    fn quad_expectation_examples() {
        let std_normal = Density1d::Normal { mean: 0.0, sd: 1.0 };
        assert!((quad_expectation_1d(|_| 1.0, &std_normal) - 1.0).abs() < 1e-14);
        assert!(quad_expectation_1d(|x| x.powi(3) * (1.0 + x * x).recip(), &std_normal).abs() < 1e-12);
        let want = (1.0 + (-2.0f64).exp()) / 2.0;
        let a = quad_expectation_1d(|x| x.cos().powi(2), &std_normal);
        let b = gauss_hermite_expectation(|x| x.cos().powi(2), 0.0, 1.0, 60);
        assert!((a - want).abs() < 1e-10);
        assert!((a - b).abs() < 1e-8);
        let dens = |x: f64| (-0.5 * x * x).exp();
        let un = Density1d::Unnormalized {
            density: &dens,
            lo: -14.0,
            hi: 14.0,
        };
        assert!((quad_expectation_1d(|x| x.cos().powi(2), &un) - want).abs() < 1e-10);
    }

    #[test]
    fn quad_acceptance_basic() {
        let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
        let w1 = Arc::new(Window::with_size(1, 1, m.neighborhood(), BoundaryMode::Zero).unwrap());
        assert_eq!(quad_acceptance(&m, &w1, 0.0).unwrap(), 1.0);
        let taus = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
        let vals: Vec<f64> = taus.iter().map(|&t| quad_acceptance(&m, &w1, t).unwrap()).collect();
        assert!(vals.windows(2).all(|v| v[1] < v[0]), "{vals:?}");
        let w3 = Arc::new(Window::with_size(1, 3, m.neighborhood(), BoundaryMode::Zero).unwrap());
        assert_eq!(quad_acceptance(&m, &w3, 1.0), Err(Error::QuadratureDimension(3)));
    }

    #[test]
    fn quad_acceptance_two_sites_matches_one_site_product() {
        // a product of two independent sites with tau scaled by sqrt 2 per
        // site is not the same chain, but for tau -> 0 both tend to 1; check
        // the 2-site rule against a Monte Carlo estimate instead
        let m = InteractionModel::gaussian_product(1.0, 1).unwrap();
        let w2 = Arc::new(Window::with_size(1, 2, m.neighborhood(), BoundaryMode::Zero).unwrap());
        let q = quad_acceptance(&m, &w2, 1.5).unwrap();
        let mut rng = StreamRng::new(99, 0);
        let draws = 400_000;
        let sigma = 1.5 / 2f64.sqrt();
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..draws {
            let x: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let r: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let dh: f64 = (0..2)
                .map(|i| ((x[i] + sigma * r[i]).powi(2) - x[i].powi(2)) / 2.0)
                .sum();
            let a = if dh <= 0.0 { 1.0 } else { (-dh).exp() };
            acc += a;
            acc2 += a * a;
        }
        let mean = acc / draws as f64;
        let se = ((acc2 / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!((q - mean).abs() < 4.0 * se, "quad {q} vs mc {mean} +- {se}");
    }

    #[test]
    fn quad_grid_refinement_is_stable() {
        let m = InteractionModel::phi4(0.5, -0.5, 1.0, 1).unwrap();
        let m = InteractionModel::new(m.family().clone(), Neighborhood::origin_only(1)).unwrap();
        let w = Arc::new(Window::with_size(1, 1, m.neighborhood(), BoundaryMode::Zero).unwrap());
        let t = QuadTarget::new(&m, &w).unwrap();
        for tau in [0.5, 1.0, 2.0, 4.0] {
            let a = t.acceptance(tau, 1);
            let b = t.acceptance(tau, 2);
            assert!((a - b).abs() < 1e-5, "tau {tau}: {a} vs {b}");
        }
    }
}
