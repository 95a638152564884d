//! Translation-invariant finite-range Gibbs models.
//!
//! Every built-in family is a polynomial self-energy plus symmetric quadratic
//! pair couplings. The site energy of vertex `k` is
//!
//! ```text
//! e_k(x) = u(x_k) + 1/4 * sum_{v != 0} J_v (x_k - x_{k+v})^2
//! ```
//!
//! and the local potential is `h_k = -e_k`, so the window Hamiltonian is
//! `H_W = -sum_{k in W} h_k = sum_{k in W} e_k` and the density is
//! proportional to `exp(-H_W)`. Each pair appears in the energies of both of
//! its endpoints, which is why the pair weight is a quarter: an edge inside
//! the window carries `J/2 (x_k - x_j)^2` in total, and for interior `k`
//!
//! ```text
//! D_k H_W = u'(x_k) + sum_{v != 0} J_v (x_k - x_{k+v}).
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Neighborhood, Site, VertexId, Window};

/// A configuration on a window: one real value per window vertex.
#[derive(Debug, Clone)]
pub struct Configuration {
    window: Arc<Window>,
    values: Vec<f64>,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        same_window(&self.window, &other.window) && self.values == other.values
    }
}

fn same_window(a: &Arc<Window>, b: &Arc<Window>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl Configuration {
    pub fn new(window: Arc<Window>, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(Error::LengthMismatch {
                expected: window.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Configuration { window, values })
    }

    pub fn zeros(window: Arc<Window>) -> Self {
        let n = window.len();
        Configuration {
            window,
            values: vec![0.0; n],
        }
    }

    pub fn window(&self) -> &Arc<Window> {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, v: &VertexId) -> Option<f64> {
        self.window.index_of(v).map(|k| self.values[k])
    }

    pub(crate) fn from_parts_unchecked(window: Arc<Window>, values: Vec<f64>) -> Self {
        debug_assert_eq!(window.len(), values.len());
        Configuration { window, values }
    }

    pub fn same_window(&self, other: &Configuration) -> bool {
        same_window(&self.window, &other.window)
    }
}

/// The built-in model zoo.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFamily {
    /// Independent `N(0, variance)` coordinates.
    GaussianProduct { variance: f64 },
    /// Lattice free field: `u(x) = mass2/2 x^2`, coupling on every non-zero offset.
    Gff { coupling: f64, mass2: f64 },
    /// `u(x) = a x^4 + b x^2` plus quadratic coupling. Unbounded curvature.
    Phi4 { a: f64, b: f64, coupling: f64 },
    /// Explicit per-offset couplings and polynomial self-energy
    /// `u(x) = sum_p self_potential[p] x^p`.
    Pairwise {
        couplings: Vec<(Vec<i64>, f64)>,
        self_potential: Vec<f64>,
        supports_free_boundary: bool,
    },
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::GaussianProduct { .. } => "gaussian_product",
            ModelFamily::Gff { .. } => "gff",
            ModelFamily::Phi4 { .. } => "phi4",
            ModelFamily::Pairwise { .. } => "pairwise",
        }
    }
}

/// What the sampler and the oracles may assume about a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_free_boundary: bool,
    /// Upper bound on `|D_{x_i x_j} h_m|`; `None` when the curvature is unbounded.
    pub grad2_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionModel {
    family: ModelFamily,
    neighborhood: Neighborhood,
    self_poly: Vec<f64>,
    couplings: Vec<f64>,
    uniform_coupling: Option<f64>,
    capabilities: Capabilities,
}

impl InteractionModel {
    pub fn new(family: ModelFamily, neighborhood: Neighborhood) -> Result<Self> {
        let m = neighborhood.nonzero_len();
        let (self_poly, couplings, free_ok) = match &family {
            ModelFamily::GaussianProduct { variance } => {
                positive("variance", *variance)?;
                (vec![0.0, 0.0, 0.5 / variance], vec![0.0; m], true)
            }
            ModelFamily::Gff { coupling, mass2 } => {
                nonnegative("coupling", *coupling)?;
                nonnegative("mass2", *mass2)?;
                (vec![0.0, 0.0, 0.5 * mass2], vec![*coupling; m], true)
            }
            ModelFamily::Phi4 { a, b, coupling } => {
                positive("a", *a)?;
                finite("b", *b)?;
                finite("coupling", *coupling)?;
                (vec![0.0, 0.0, *b, 0.0, *a], vec![*coupling; m], true)
            }
            ModelFamily::Pairwise {
                couplings: pairs,
                self_potential,
                supports_free_boundary,
            } => {
                // an offset given on one side only applies to its mirror too
                let mut given: Vec<Option<f64>> = vec![None; m];
                for (off, j) in pairs {
                    finite("coupling", *j)?;
                    let off = VertexId(off.clone());
                    if off.is_origin() {
                        return Err(Error::Model("coupling on the zero offset".into()));
                    }
                    let slot = neighborhood
                        .slot_of(&off)
                        .ok_or_else(|| Error::Model(format!("coupling offset {off} is not in the neighborhood")))?;
                    if given[slot].is_some_and(|prev| prev != *j) {
                        return Err(Error::Model(format!("offset {off} given twice")));
                    }
                    given[slot] = Some(*j);
                }
                let mut js = vec![0.0; m];
                for (slot, off) in neighborhood.nonzero().enumerate() {
                    let mirror = neighborhood.slot_of(&off.neg()).expect("symmetric");
                    js[slot] = match (given[slot], given[mirror]) {
                        (Some(a), Some(b)) if a != b => {
                            return Err(Error::Model(format!("couplings for {off} and its mirror differ")))
                        }
                        (Some(a), _) | (None, Some(a)) => a,
                        (None, None) => 0.0,
                    };
                }
                check_self_potential(self_potential)?;
                (self_potential.clone(), js, *supports_free_boundary)
            }
        };
        let uniform_coupling = match couplings.first() {
            None => Some(0.0),
            Some(&j) if couplings.iter().all(|&c| c == j) => Some(j),
            Some(_) => None,
        };
        let grad2_bound = if self_poly.len() <= 3 || self_poly[3..].iter().all(|&c| c == 0.0) {
            let u2 = 2.0 * self_poly.get(2).copied().unwrap_or(0.0);
            let half_sum: f64 = couplings.iter().sum::<f64>() / 2.0;
            let half_max = couplings.iter().fold(0.0f64, |a, &c| a.max(c.abs())) / 2.0;
            Some((u2 + half_sum).abs().max(half_max))
        } else {
            None
        };
        Ok(InteractionModel {
            family,
            neighborhood,
            self_poly,
            couplings,
            uniform_coupling,
            capabilities: Capabilities {
                supports_free_boundary: free_ok,
                grad2_bound,
            },
        })
    }

    pub fn gaussian_product(variance: f64, dim: usize) -> Result<Self> {
        InteractionModel::new(
            ModelFamily::GaussianProduct { variance },
            Neighborhood::origin_only(dim),
        )
    }

    pub fn gff(coupling: f64, mass2: f64, dim: usize) -> Result<Self> {
        InteractionModel::new(ModelFamily::Gff { coupling, mass2 }, Neighborhood::nearest(dim))
    }

    pub fn phi4(a: f64, b: f64, coupling: f64, dim: usize) -> Result<Self> {
        InteractionModel::new(ModelFamily::Phi4 { a, b, coupling }, Neighborhood::nearest(dim))
    }

    pub fn from_spec(spec: &ModelSpec, dim: usize) -> Result<Self> {
        let neighborhood = spec.neighborhood.resolve(dim)?;
        InteractionModel::new(spec.family.clone(), neighborhood)
    }

    /// The same model with every `h_k` shifted by `-shift` (energy `+shift`).
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        if out.self_poly.is_empty() {
            out.self_poly.push(0.0);
        }
        out.self_poly[0] += shift;
        out
    }

    pub fn family(&self) -> &ModelFamily {
        &self.family
    }

    pub fn neighborhood(&self) -> &Neighborhood {
        &self.neighborhood
    }

    pub fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    /// Coefficients of the self-energy polynomial `u`.
    pub fn self_energy(&self) -> &[f64] {
        &self.self_poly
    }

    /// Coupling per non-zero offset, in neighborhood order.
    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// True when the Hamiltonian is a quadratic form (exact Gaussian target).
    pub fn is_quadratic(&self) -> bool {
        self.self_poly.iter().skip(3).all(|&c| c == 0.0)
    }

    /// Checks that the model can act on `window` and returns the coupling
    /// table indexed by link slot.
    pub fn couplings_for<'a>(&'a self, window: &Window) -> Result<&'a [f64]> {
        if window.is_adjacency() {
            return match &self.uniform_coupling {
                Some(j) => Ok(std::slice::from_ref(j)),
                None => Err(Error::Model(
                    "adjacency graphs need a single coupling for all neighbors".into(),
                )),
            };
        }
        if window.neighborhood() != &self.neighborhood {
            return Err(Error::Model("window and model use different neighborhoods".into()));
        }
        if window.boundary_mode() == crate::lattice::BoundaryMode::Free && !self.capabilities.supports_free_boundary {
            return Err(Error::FreeBoundaryUnsupported);
        }
        Ok(&self.couplings)
    }

    /// Self-energy `u(x)`.
    #[inline]
    pub fn u(&self, x: f64) -> f64 {
        self.self_poly.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `u'(x)`.
    #[inline]
    pub fn du(&self, x: f64) -> f64 {
        self.self_poly
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (p, &c)| acc * x + p as f64 * c)
    }

    /// `u(y) - u(x)` without the constant term, as `(y - x) * S(x, y)` with
    /// `S` evaluated in a fixed argument order so that swapping `x` and `y`
    /// negates the result exactly.
    #[inline]
    fn du_diff(&self, x: f64, y: f64) -> f64 {
        if self.self_poly.len() <= 3 {
            let c1 = self.self_poly.get(1).copied().unwrap_or(0.0);
            let c2 = self.self_poly.get(2).copied().unwrap_or(0.0);
            return (y - x) * (c1 + c2 * (x + y));
        }
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let mut s = 0.0;
        for (p, &c) in self.self_poly.iter().enumerate().skip(1) {
            if c == 0.0 {
                continue;
            }
            // sum_{i<p} hi^i lo^(p-1-i)
            let mut term = 0.0;
            let mut hp = 1.0;
            for i in 0..p {
                term += hp * lo.powi((p - 1 - i) as i32);
                hp *= hi;
            }
            s += c * term;
        }
        (y - x) * s
    }

    /// `H_W(x)`.
    pub fn hamiltonian(&self, config: &Configuration) -> Result<f64> {
        let window = config.window();
        let js = self.couplings_for(window)?;
        let x = config.values();
        let mut total = 0.0;
        for (k, &xk) in x.iter().enumerate() {
            let mut e = self.u(xk);
            for link in window.links(k) {
                let xj = match link.site {
                    Site::Inside(j) => x[j],
                    Site::Fixed(z) => z,
                    Site::Dropped => continue,
                };
                let d = xk - xj;
                e += 0.25 * js[link.slot] * d * d;
            }
            total += e;
        }
        Ok(total)
    }

    /// `H_W(y) - H_W(x)` summed as per-site energy differences.
    pub fn delta_hamiltonian(&self, x: &Configuration, y: &Configuration) -> Result<f64> {
        if !x.same_window(y) {
            return Err(Error::WindowMismatch);
        }
        let js = self.couplings_for(x.window())?;
        Ok(self.delta_raw(x.window(), js, x.values(), y.values()))
    }

    /// Unchecked core of [`InteractionModel::delta_hamiltonian`].
    #[inline]
    pub(crate) fn delta_raw(&self, window: &Window, js: &[f64], x: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for k in 0..x.len() {
            let (xk, yk) = (x[k], y[k]);
            let mut d = self.du_diff(xk, yk);
            for link in window.links(k) {
                let (xj, yj) = match link.site {
                    Site::Inside(j) => (x[j], y[j]),
                    Site::Fixed(z) => (z, z),
                    Site::Dropped => continue,
                };
                let a = yk - yj;
                let b = xk - xj;
                d += 0.25 * js[link.slot] * ((a - b) * (a + b));
            }
            total += d;
        }
        total
    }

    /// `log(psi(y) / psi(x)) = -(H(y) - H(x))`.
    pub fn log_density_ratio(&self, x: &Configuration, y: &Configuration) -> Result<f64> {
        Ok(-self.delta_hamiltonian(x, y)?)
    }

    /// `D_{x_k} H_W`. Unless `allow_boundary`, `k` must be interior, where the
    /// window gradient equals the infinite-volume gradient `D_{x_k} H`.
    pub fn grad_hamiltonian(&self, config: &Configuration, k: &VertexId, allow_boundary: bool) -> Result<f64> {
        let window = config.window();
        let js = self.couplings_for(window)?;
        let idx = window.index_of(k).ok_or_else(|| Error::VertexNotInWindow(k.clone()))?;
        if !allow_boundary && !window.is_interior(idx) {
            return Err(Error::BoundaryVertex(k.clone()));
        }
        Ok(self.grad_raw(window, js, config.values(), idx))
    }

    #[inline]
    pub(crate) fn grad_raw(&self, window: &Window, js: &[f64], x: &[f64], k: usize) -> f64 {
        let xk = x[k];
        let mut g = self.du(xk);
        for link in window.links(k) {
            let (xj, weight) = match link.site {
                // own energy term plus the neighbor's energy term
                Site::Inside(j) => (x[j], 1.0),
                Site::Fixed(z) => (z, 0.5),
                Site::Dropped => continue,
            };
            g += weight * js[link.slot] * (xk - xj);
        }
        g
    }

    /// Window gradient at every vertex.
    pub fn gradient(&self, config: &Configuration) -> Result<Vec<f64>> {
        let window = config.window();
        let js = self.couplings_for(window)?;
        Ok((0..config.len())
            .map(|k| self.grad_raw(window, js, config.values(), k))
            .collect())
    }

    /// `h(values)` for a single site, with `values[i]` the field at
    /// `neighborhood.offsets()[i]` relative to the site (`None` = dropped).
    pub fn local_potential(&self, values: &[Option<f64>]) -> f64 {
        let offsets = self.neighborhood.offsets();
        let center = offsets
            .iter()
            .position(VertexId::is_origin)
            .expect("origin in neighborhood");
        let x0 = values[center].expect("site value present");
        let mut e = self.u(x0);
        let mut slot = 0;
        for (i, off) in offsets.iter().enumerate() {
            if off.is_origin() {
                continue;
            }
            if let Some(xv) = values[i] {
                let d = x0 - xv;
                e += 0.25 * self.couplings[slot] * d * d;
            }
            slot += 1;
        }
        -e
    }

    /// Values seen by the local potential of window vertex `k`, in neighborhood
    /// offset order.
    pub fn local_values(&self, config: &Configuration, k: usize) -> Result<Vec<Option<f64>>> {
        let window = config.window();
        if window.is_adjacency() {
            return Err(Error::Model("local potentials need a lattice window".into()));
        }
        let vk = window.vertex(k);
        self.neighborhood
            .offsets()
            .iter()
            .map(|off| {
                let target = vk.add(off);
                match window.value_at(config.values(), &target) {
                    Ok(v) => Ok(Some(v)),
                    Err(_) if window.boundary_mode() == crate::lattice::BoundaryMode::Free => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Model(format!("{name} must be positive and finite, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Model(format!("{name} must be nonnegative and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Model(format!("{name} must be finite, got {v}")))
    }
}

fn check_self_potential(coeffs: &[f64]) -> Result<()> {
    if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
        return Err(Error::Model(format!("self-potential coefficient {c} is not finite")));
    }
    let degree = coeffs.iter().rposition(|&c| c != 0.0);
    match degree {
        Some(p) if p > 2 && (p % 2 == 1 || coeffs[p] < 0.0) => Err(Error::Model(
            "self-potential must have even degree with a positive leading coefficient".into(),
        )),
        Some(2) if coeffs[2] < 0.0 => Err(Error::Model(
            "quadratic self-potential must have a nonnegative x^2 coefficient".into(),
        )),
        _ => Ok(()),
    }
}

/// How a model block names its offset set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NeighborhoodSpec {
    Origin,
    Nearest,
    Offsets(Vec<Vec<i64>>),
}

impl NeighborhoodSpec {
    pub fn resolve(&self, dim: usize) -> Result<Neighborhood> {
        match self {
            NeighborhoodSpec::Origin => Ok(Neighborhood::origin_only(dim)),
            NeighborhoodSpec::Nearest => Ok(Neighborhood::nearest(dim)),
            NeighborhoodSpec::Offsets(list) => Neighborhood::new(dim, list.iter().cloned()),
        }
    }
}

/// Model block of an experiment document:
/// `{"family": ..., "parameters": {...}, "neighborhood": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec", into = "RawModelSpec")]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub neighborhood: NeighborhoodSpec,
}

impl ModelSpec {
    pub fn default_neighborhood(family: &ModelFamily) -> NeighborhoodSpec {
        match family {
            ModelFamily::GaussianProduct { .. } => NeighborhoodSpec::Origin,
            _ => NeighborhoodSpec::Nearest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    GaussianProduct,
    Gff,
    Phi4,
    Pairwise,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<OffsetCoupling>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_potential: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supports_free_boundary: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetCoupling {
    pub offset: Vec<i64>,
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModelSpec {
    pub family: FamilyKind,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood: Option<NeighborhoodSpec>,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        let p = raw.parameters;
        let allowed: &[&str] = match raw.family {
            FamilyKind::GaussianProduct => &["variance"],
            FamilyKind::Gff => &["coupling", "mass2"],
            FamilyKind::Phi4 => &["a", "b", "coupling"],
            FamilyKind::Pairwise => &["couplings", "self_potential", "supports_free_boundary"],
        };
        let present = [
            ("variance", p.variance.is_some()),
            ("coupling", p.coupling.is_some()),
            ("mass2", p.mass2.is_some()),
            ("a", p.a.is_some()),
            ("b", p.b.is_some()),
            ("couplings", p.couplings.is_some()),
            ("self_potential", p.self_potential.is_some()),
            ("supports_free_boundary", p.supports_free_boundary.is_some()),
        ];
        if let Some((name, _)) = present.iter().find(|(n, set)| *set && !allowed.contains(n)) {
            return Err(Error::Model(format!(
                "parameter `{name}` does not apply to family {:?}",
                raw.family
            )));
        }
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| Error::Model(format!("missing parameter `{name}`")));
        let family = match raw.family {
            FamilyKind::GaussianProduct => ModelFamily::GaussianProduct {
                variance: p.variance.unwrap_or(1.0),
            },
            FamilyKind::Gff => ModelFamily::Gff {
                coupling: need("coupling", p.coupling)?,
                mass2: need("mass2", p.mass2)?,
            },
            FamilyKind::Phi4 => ModelFamily::Phi4 {
                a: need("a", p.a)?,
                b: need("b", p.b)?,
                coupling: p.coupling.unwrap_or(1.0),
            },
            FamilyKind::Pairwise => ModelFamily::Pairwise {
                couplings: p
                    .couplings
                    .unwrap_or_default()
                    .into_iter()
                    .map(|c| (c.offset, c.coupling))
                    .collect(),
                self_potential: p
                    .self_potential
                    .ok_or_else(|| Error::Model("missing parameter `self_potential`".into()))?,
                supports_free_boundary: p.supports_free_boundary.unwrap_or(true),
            },
        };
        let neighborhood = raw
            .neighborhood
            .unwrap_or_else(|| ModelSpec::default_neighborhood(&family));
        Ok(ModelSpec { family, neighborhood })
    }
}

impl From<ModelSpec> for RawModelSpec {
    fn from(spec: ModelSpec) -> Self {
        let mut p = Parameters::default();
        let family = match spec.family {
            ModelFamily::GaussianProduct { variance } => {
                p.variance = Some(variance);
                FamilyKind::GaussianProduct
            }
            ModelFamily::Gff { coupling, mass2 } => {
                p.coupling = Some(coupling);
                p.mass2 = Some(mass2);
                FamilyKind::Gff
            }
            ModelFamily::Phi4 { a, b, coupling } => {
                p.a = Some(a);
                p.b = Some(b);
                p.coupling = Some(coupling);
                FamilyKind::Phi4
            }
            ModelFamily::Pairwise {
                couplings,
                self_potential,
                supports_free_boundary,
            } => {
                p.couplings = Some(
                    couplings
                        .into_iter()
                        .map(|(offset, coupling)| OffsetCoupling { offset, coupling })
                        .collect(),
                );
                p.self_potential = Some(self_potential);
                p.supports_free_boundary = Some(supports_free_boundary);
                FamilyKind::Pairwise
            }
        };
        RawModelSpec {
            family,
            parameters: p,
            neighborhood: Some(spec.neighborhood),
        }
    }
}
