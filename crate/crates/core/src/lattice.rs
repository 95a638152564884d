//! Finite windows of `Z^d`, interaction neighborhoods and the regularity
//! diagnostics of window sequences (hull ratio, inscribed radius, boundary
//! growth).
//!
//! A [`Window`] is the finite vertex set the sampler actually moves. Every
//! window vertex carries a precomputed link table: for each non-zero offset of
//! the neighborhood the link points either at another window vertex, at a
//! frozen boundary value, or nowhere (free boundary).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice vertex, stored as its integer coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub Vec<i64>);

impl VertexId {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        VertexId(coords.into())
    }

    pub fn origin(dim: usize) -> Self {
        VertexId(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn add(&self, other: &VertexId) -> VertexId {
        VertexId(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &VertexId) -> VertexId {
        VertexId(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> VertexId {
        VertexId(self.0.iter().map(|a| -a).collect())
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// The finite offset set of a finite-range interaction.
///
/// Always contains the origin, is closed under negation, and is kept sorted
/// lexicographically without duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct Neighborhood {
    dim: usize,
    offsets: Vec<VertexId>,
}

impl Neighborhood {
    /// Canonicalizes an offset list: adds the origin, closes under negation,
    /// sorts and removes duplicates.
    pub fn new(dim: usize, offsets: impl IntoIterator<Item = Vec<i64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Neighborhood("dimension must be at least 1".into()));
        }
        let mut set = BTreeSet::new();
        set.insert(VertexId::origin(dim));
        for off in offsets {
            if off.len() != dim {
                return Err(Error::Neighborhood(format!(
                    "offset {:?} has {} coordinates, expected {dim}",
                    off,
                    off.len()
                )));
            }
            let v = VertexId(off);
            set.insert(v.neg());
            set.insert(v);
        }
        Ok(Neighborhood {
            dim,
            offsets: set.into_iter().collect(),
        })
    }

    pub fn origin_only(dim: usize) -> Self {
        Neighborhood::new(dim, std::iter::empty()).expect("dim >= 1")
    }

    /// The `2d` unit offsets plus the origin.
    pub fn nearest(dim: usize) -> Self {
        let units = (0..dim).map(|axis| {
            let mut e = vec![0; dim];
            e[axis] = 1;
            e
        });
        Neighborhood::new(dim, units).expect("dim >= 1")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offsets(&self) -> &[VertexId] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Offsets other than the origin, in canonical order. Link slots of a
    /// lattice window are indexed by position in this list.
    pub fn nonzero(&self) -> impl Iterator<Item = &VertexId> + '_ {
        self.offsets.iter().filter(|v| !v.is_origin())
    }

    pub fn nonzero_len(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Position of `offset` in [`Neighborhood::nonzero`].
    pub fn slot_of(&self, offset: &VertexId) -> Option<usize> {
        self.nonzero().position(|v| v == offset)
    }

    pub fn contains(&self, offset: &VertexId) -> bool {
        self.offsets.binary_search(offset).is_ok()
    }

    /// Largest absolute coordinate over all offsets.
    pub fn range(&self) -> i64 {
        self.offsets
            .iter()
            .flat_map(|v| v.0.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }
}

impl TryFrom<Vec<Vec<i64>>> for Neighborhood {
    type Error = Error;

    fn try_from(offsets: Vec<Vec<i64>>) -> Result<Self> {
        let dim = offsets
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Neighborhood("offset list is empty".into()))?;
        Neighborhood::new(dim, offsets)
    }
}

impl From<Neighborhood> for Vec<Vec<i64>> {
    fn from(n: Neighborhood) -> Self {
        n.offsets.into_iter().map(|v| v.0).collect()
    }
}

/// How the configuration outside the window is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BoundaryMode {
    /// Outside values are all zero.
    #[default]
    Zero,
    /// Potential terms that reference outside vertices are dropped.
    Free,
    /// Outside values all equal the given constant.
    Constant(f64),
}

impl BoundaryMode {
    fn outside_value(self) -> Option<f64> {
        match self {
            BoundaryMode::Zero => Some(0.0),
            BoundaryMode::Free => None,
            BoundaryMode::Constant(c) => Some(c),
        }
    }
}

/// Where a link from a window vertex lands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Site {
    Inside(usize),
    Fixed(f64),
    Dropped,
}

/// One neighbor reference of a window vertex. `slot` indexes the coupling of
/// the offset it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub slot: usize,
    pub site: Site,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Box { half_width: u32 },
    Cube { side: usize },
    List,
    Adjacency,
}

/// A finite window `V_n` with its boundary and frozen outside configuration.
#[derive(Debug, Clone)]
pub struct Window {
    dim: usize,
    shape: Shape,
    vertices: Vec<VertexId>,
    index_of: HashMap<VertexId, usize>,
    neighborhood: Neighborhood,
    mode: BoundaryMode,
    boundary: Vec<usize>,
    boundary_values: BTreeMap<VertexId, f64>,
    link_start: Vec<usize>,
    links: Vec<Link>,
}

impl PartialEq for Window {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.vertices == other.vertices
            && self.neighborhood == other.neighborhood
            && self.mode == other.mode
            && self.links == other.links
            && self.link_start == other.link_start
    }
}

impl Window {
    /// The box `[-L, L]^d`.
    pub fn build_box(dim: usize, half_width: u32, neighborhood: &Neighborhood, mode: BoundaryMode) -> Result<Self> {
        check_dim(dim, neighborhood)?;
        let l = half_width as i64;
        let vertices = box_points(dim, -l, l);
        Window::assemble(dim, Shape::Box { half_width }, vertices, neighborhood, mode)
    }

    /// The cube `{0, .., side-1}^d`; handy when an exact vertex count is wanted.
    pub fn cube(dim: usize, side: usize, neighborhood: &Neighborhood, mode: BoundaryMode) -> Result<Self> {
        check_dim(dim, neighborhood)?;
        if side == 0 {
            return Err(Error::Window("cube side must be positive".into()));
        }
        let vertices = box_points(dim, 0, side as i64 - 1);
        Window::assemble(dim, Shape::Cube { side }, vertices, neighborhood, mode)
    }

    /// A cube with exactly `n` vertices in dimension `dim`; `n` must be a
    /// perfect `dim`-th power.
    pub fn with_size(dim: usize, n: usize, neighborhood: &Neighborhood, mode: BoundaryMode) -> Result<Self> {
        let side = integer_root(n, dim)
            .ok_or_else(|| Error::Window(format!("{n} vertices do not form a cube in dimension {dim}")))?;
        Window::cube(dim, side, neighborhood, mode)
    }

    /// An arbitrary finite vertex set of `Z^d`.
    pub fn from_vertices(vertices: Vec<VertexId>, neighborhood: &Neighborhood, mode: BoundaryMode) -> Result<Self> {
        let dim = neighborhood.dim();
        if vertices.is_empty() {
            return Err(Error::Window("vertex list is empty".into()));
        }
        if let Some(v) = vertices.iter().find(|v| v.dim() != dim) {
            return Err(Error::Window(format!("vertex {v} does not have {dim} coordinates")));
        }
        let mut sorted = vertices;
        sorted.sort();
        let before = sorted.len();
        sorted.dedup();
        if sorted.len() != before {
            return Err(Error::Window("vertex list has duplicates".into()));
        }
        Window::assemble(dim, Shape::List, sorted, neighborhood, mode)
    }

    /// A whole finite graph given by symmetric neighbor lists over
    /// `0..neighbors.len()`. The window is the entire graph, so the boundary
    /// is empty; vertex `i` is labelled `(i)`.
    pub fn from_adjacency(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        if n == 0 {
            return Err(Error::Window("graph has no vertices".into()));
        }
        for (i, list) in neighbors.iter().enumerate() {
            for &j in list {
                if j >= n {
                    return Err(Error::Window(format!("vertex {i} lists unknown neighbor {j}")));
                }
                if j == i {
                    return Err(Error::Window(format!("vertex {i} lists itself")));
                }
                if !neighbors[j].contains(&i) {
                    return Err(Error::Window(format!(
                        "adjacency is not symmetric: {i} -> {j} without {j} -> {i}"
                    )));
                }
            }
        }
        let vertices: Vec<VertexId> = (0..n as i64).map(|i| VertexId(vec![i])).collect();
        let index_of = vertices.iter().cloned().zip(0..).collect();
        let mut link_start = Vec::with_capacity(n + 1);
        let mut links = Vec::new();
        for list in &neighbors {
            link_start.push(links.len());
            links.extend(list.iter().map(|&j| Link {
                slot: 0,
                site: Site::Inside(j),
            }));
        }
        link_start.push(links.len());
        Ok(Window {
            dim: 1,
            shape: Shape::Adjacency,
            vertices,
            index_of,
            neighborhood: Neighborhood::nearest(1),
            mode: BoundaryMode::Free,
            boundary: Vec::new(),
            boundary_values: BTreeMap::new(),
            link_start,
            links,
        })
    }

    /// Builds a window from its document form. Offsets in the document
    /// override `default_neighborhood` when present.
    pub fn from_spec(spec: &WindowSpec, default_neighborhood: Option<&Neighborhood>) -> Result<Self> {
        let neighborhood = match (&spec.offsets, default_neighborhood) {
            (Some(offsets), _) => Neighborhood::new(spec.d, offsets.iter().cloned())?,
            (None, Some(n)) => n.clone(),
            (None, None) => Neighborhood::origin_only(spec.d),
        };
        let mode = spec.boundary()?;
        match (spec.half_width, spec.n, &spec.vertex_list) {
            (Some(l), None, None) => Window::build_box(spec.d, l, &neighborhood, mode),
            (None, Some(n), None) => Window::with_size(spec.d, n, &neighborhood, mode),
            (None, None, Some(list)) => {
                Window::from_vertices(list.iter().cloned().map(VertexId).collect(), &neighborhood, mode)
            }
            _ => Err(Error::Window("exactly one of L, n, vertex_list must be given".into())),
        }
    }

    /// Document form of this window (adjacency windows have none).
    pub fn to_spec(&self) -> Option<WindowSpec> {
        let (half_width, n, vertex_list) = match self.shape {
            Shape::Box { half_width } => (Some(half_width), None, None),
            Shape::Cube { .. } => (None, Some(self.len()), None),
            Shape::List => (None, None, Some(self.vertices.iter().map(|v| v.0.clone()).collect())),
            Shape::Adjacency => return None,
        };
        let (boundary_mode, boundary_constant) = match self.mode {
            BoundaryMode::Zero => (BoundaryKind::Zero, None),
            BoundaryMode::Free => (BoundaryKind::Free, None),
            BoundaryMode::Constant(c) => (BoundaryKind::Constant, Some(c)),
        };
        Some(WindowSpec {
            d: self.dim,
            half_width,
            n,
            vertex_list,
            offsets: Some(self.neighborhood.clone().into()),
            boundary_mode,
            boundary_constant,
        })
    }

    fn assemble(
        dim: usize,
        shape: Shape,
        vertices: Vec<VertexId>,
        neighborhood: &Neighborhood,
        mode: BoundaryMode,
    ) -> Result<Self> {
        if let BoundaryMode::Constant(c) = mode {
            if !c.is_finite() {
                return Err(Error::Window("boundary constant must be finite".into()));
            }
        }
        let index_of: HashMap<VertexId, usize> = vertices.iter().cloned().zip(0..).collect();
        let m = neighborhood.nonzero_len();
        let mut link_start = Vec::with_capacity(vertices.len() + 1);
        let mut links = Vec::with_capacity(vertices.len() * m);
        let mut boundary = Vec::new();
        let mut boundary_values = BTreeMap::new();
        for (k, v) in vertices.iter().enumerate() {
            link_start.push(links.len());
            let mut on_boundary = false;
            for (slot, off) in neighborhood.nonzero().enumerate() {
                let target = v.add(off);
                let site = match index_of.get(&target) {
                    Some(&j) => Site::Inside(j),
                    None => {
                        on_boundary = true;
                        match mode.outside_value() {
                            Some(z) => {
                                boundary_values.insert(target, z);
                                Site::Fixed(z)
                            }
                            None => Site::Dropped,
                        }
                    }
                };
                links.push(Link { slot, site });
            }
            if on_boundary {
                boundary.push(k);
            }
        }
        link_start.push(links.len());
        Ok(Window {
            dim,
            shape,
            vertices,
            index_of,
            neighborhood: neighborhood.clone(),
            mode,
            boundary,
            boundary_values,
            link_start,
            links,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn vertex(&self, index: usize) -> &VertexId {
        &self.vertices[index]
    }

    pub fn index_of(&self, v: &VertexId) -> Option<usize> {
        self.index_of.get(v).copied()
    }

    pub fn neighborhood(&self) -> &Neighborhood {
        &self.neighborhood
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn is_adjacency(&self) -> bool {
        self.shape == Shape::Adjacency
    }

    /// Indices of `∂V = {k in V : k + offsets not inside V}`, ascending.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn boundary_vertices(&self) -> BTreeSet<VertexId> {
        self.boundary.iter().map(|&k| self.vertices[k].clone()).collect()
    }

    pub fn is_interior(&self, index: usize) -> bool {
        self.boundary.binary_search(&index).is_err()
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.is_interior(k))
    }

    /// Frozen values of the outside vertices referenced from the window.
    pub fn boundary_values(&self) -> &BTreeMap<VertexId, f64> {
        &self.boundary_values
    }

    /// Links of window vertex `k`.
    #[inline]
    pub fn links(&self, k: usize) -> &[Link] {
        &self.links[self.link_start[k]..self.link_start[k + 1]]
    }

    /// Value of the configuration at `target` (window vertex or frozen
    /// outside vertex).
    pub fn value_at(&self, values: &[f64], target: &VertexId) -> Result<f64> {
        if let Some(k) = self.index_of(target) {
            return Ok(values[k]);
        }
        self.boundary_values
            .get(target)
            .copied()
            .ok_or_else(|| Error::MissingBoundaryValue(target.clone()))
    }

    /// `|V'| / |V|` with `V'` the lattice points of the convex hull. `None`
    /// for non-box vertex lists in dimension 3 and higher.
    pub fn hull_ratio(&self) -> Option<f64> {
        if self.is_adjacency() {
            return None;
        }
        hull_lattice_count(&self.vertices).map(|c| c as f64 / self.len() as f64)
    }

    /// Largest `r` such that a lattice ball of radius `r` around some window
    /// vertex stays inside the window: `max_c dist(c, Z^d \ V) - 1`.
    pub fn inradius(&self) -> f64 {
        match self.shape {
            Shape::Box { half_width } => half_width as f64,
            Shape::Adjacency => 0.0,
            _ => brute_inradius(&self.vertices),
        }
    }

    /// `|∂V| / |V|`, the share of vertices whose neighborhood leaves the
    /// window.
    pub fn boundary_ratio(&self) -> f64 {
        self.boundary_vertices().len() as f64 / self.len() as f64
    }

    /// `|offsets + ∂V| / |V|`.
    pub fn padded_boundary_ratio(&self) -> f64 {
        let bset = self.boundary_vertices();
        let mut hull = BTreeSet::new();
        for b in &bset {
            for off in self.neighborhood.offsets() {
                hull.insert(b.add(off));
            }
        }
        hull.len() as f64 / self.len() as f64
    }

    /// Checks the stored boundary and link table against a fresh computation.
    pub fn validate(&self) -> Result<()> {
        if self.is_adjacency() {
            return Ok(());
        }
        let set: BTreeSet<VertexId> = self.vertices.iter().cloned().collect();
        if boundary_of(&set, &self.neighborhood) != self.boundary_vertices() {
            return Err(Error::Window("stored boundary is stale".into()));
        }
        for (k, v) in self.vertices.iter().enumerate() {
            if self.index_of(v) != Some(k) {
                return Err(Error::Window(format!("index map broken at {v}")));
            }
            for (link, off) in self.links(k).iter().zip(self.neighborhood.nonzero()) {
                let target = v.add(off);
                match link.site {
                    Site::Inside(j) if self.vertices[j] == target => {}
                    Site::Fixed(_) if self.boundary_values.contains_key(&target) => {}
                    Site::Dropped if self.mode == BoundaryMode::Free => {}
                    _ => return Err(Error::MissingBoundaryValue(target)),
                }
            }
        }
        Ok(())
    }
}

fn check_dim(dim: usize, neighborhood: &Neighborhood) -> Result<()> {
    if dim == 0 {
        return Err(Error::Window("dimension must be at least 1".into()));
    }
    if neighborhood.dim() != dim {
        return Err(Error::Window(format!(
            "neighborhood has dimension {}, window has {dim}",
            neighborhood.dim()
        )));
    }
    Ok(())
}

fn integer_root(n: usize, dim: usize) -> Option<usize> {
    if n == 0 || dim == 0 {
        return None;
    }
    let guess = (n as f64).powf(1.0 / dim as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&s| s > 0 && s.checked_pow(dim as u32) == Some(n))
}

/// All points of `[lo, hi]^dim` in lexicographic order.
fn box_points(dim: usize, lo: i64, hi: i64) -> Vec<VertexId> {
    let mut out = vec![VertexId(Vec::with_capacity(dim))];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                (lo..=hi).map(move |c| {
                    let mut q = p.0.clone();
                    q.push(c);
                    VertexId(q)
                })
            })
            .collect();
    }
    out
}

/// `∂V = {k in V : k + offsets ⊄ V}`.
pub fn boundary_of(vertices: &BTreeSet<VertexId>, neighborhood: &Neighborhood) -> BTreeSet<VertexId> {
    vertices
        .iter()
        .filter(|k| neighborhood.offsets().iter().any(|off| !vertices.contains(&k.add(off))))
        .cloned()
        .collect()
}

fn hull_lattice_count(vertices: &[VertexId]) -> Option<usize> {
    let dim = vertices.first()?.dim();
    let (lo, hi) = bounding_box(vertices);
    match dim {
        1 => Some((hi[0] - lo[0] + 1) as usize),
        2 => Some(hull_count_2d(vertices, &lo, &hi)),
        _ => {
            let volume: i64 = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).product();
            (volume as usize == vertices.len()).then_some(vertices.len())
        }
    }
}

fn bounding_box(vertices: &[VertexId]) -> (Vec<i64>, Vec<i64>) {
    let dim = vertices[0].dim();
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    for v in vertices {
        for (i, &c) in v.0.iter().enumerate() {
            lo[i] = lo[i].min(c);
            hi[i] = hi[i].max(c);
        }
    }
    (lo, hi)
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

// Monotone chain hull, then count integer points inside or on it.
fn hull_count_2d(vertices: &[VertexId], lo: &[i64], hi: &[i64]) -> usize {
    let mut pts: Vec<(i64, i64)> = vertices.iter().map(|v| (v.0[0], v.0[1])).collect();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        // A point or segment: the hull is a lattice segment.
        let (a, b) = (pts[0], *pts.last().unwrap());
        return gcd((b.0 - a.0).abs(), (b.1 - a.1).abs()) as usize + 1;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        let (a, b) = (pts[0], *pts.last().unwrap());
        return gcd((b.0 - a.0).abs(), (b.1 - a.1).abs()) as usize + 1;
    }
    let mut count = 0;
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            let p = (x, y);
            let inside = (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= 0);
            if inside {
                count += 1;
            }
        }
    }
    count
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn brute_inradius(vertices: &[VertexId]) -> f64 {
    let set: BTreeSet<&VertexId> = vertices.iter().collect();
    let (lo, hi) = bounding_box(vertices);
    let outside: Vec<VertexId> = box_points_range(&lo, &hi)
        .into_iter()
        .filter(|p| !set.contains(p))
        .collect();
    vertices
        .iter()
        .map(|c| {
            let d2 = outside
                .iter()
                .map(|p| {
                    p.0.iter()
                        .zip(&c.0)
                        .map(|(a, b)| ((a - b) * (a - b)) as f64)
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            d2.sqrt() - 1.0
        })
        .fold(0.0, f64::max)
}

// Points of the bounding box grown by one in every direction.
fn box_points_range(lo: &[i64], hi: &[i64]) -> Vec<VertexId> {
    let mut out = vec![VertexId(Vec::with_capacity(lo.len()))];
    for (a, b) in lo.iter().zip(hi) {
        out = out
            .into_iter()
            .flat_map(|p| {
                (a - 1..=b + 1).map(move |c| {
                    let mut q = p.0.clone();
                    q.push(c);
                    VertexId(q)
                })
            })
            .collect();
    }
    out
}

/// Document form of a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub d: usize,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex_list: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    pub boundary_mode: BoundaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_constant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Zero,
    Free,
    Constant,
}

impl WindowSpec {
    pub fn boundary(&self) -> Result<BoundaryMode> {
        match (self.boundary_mode, self.boundary_constant) {
            (BoundaryKind::Zero, None) => Ok(BoundaryMode::Zero),
            (BoundaryKind::Free, None) => Ok(BoundaryMode::Free),
            (BoundaryKind::Constant, Some(c)) => Ok(BoundaryMode::Constant(c)),
            (BoundaryKind::Constant, None) => {
                Err(Error::Window("boundary_mode constant needs boundary_constant".into()))
            }
            (_, Some(_)) => Err(Error::Window(
                "boundary_constant is only valid with boundary_mode constant".into(),
            )),
        }
    }
}

/// One row of a window-sequence report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub n: usize,
    pub hull_ratio: f64,
    pub inradius: f64,
    pub boundary_ratio: f64,
    pub padded_boundary_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSequenceReport {
    pub rows: Vec<WindowRow>,
}

impl WindowSequenceReport {
    /// Least-squares slope of `log boundary_ratio` against `log n`.
    /// `None` when fewer than two rows have a positive ratio.
    pub fn boundary_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.boundary_ratio > 0.0)
            .map(|r| ((r.n as f64).ln(), r.boundary_ratio.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Window-growth diagnostics for the box family `[-L, L]^d`.
pub fn h2_diagnostics(dim: usize, half_widths: &[u32], neighborhood: &Neighborhood) -> Result<WindowSequenceReport> {
    if half_widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("half-widths must be strictly increasing".into()));
    }
    let rows = half_widths
        .iter()
        .map(|&l| {
            let w = Window::build_box(dim, l, neighborhood, BoundaryMode::Zero)?;
            Ok(WindowRow {
                n: w.len(),
                hull_ratio: w.hull_ratio().unwrap_or(f64::NAN),
                inradius: w.inradius(),
                boundary_ratio: w.boundary_ratio(),
                padded_boundary_ratio: w.padded_boundary_ratio(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WindowSequenceReport { rows })
}
