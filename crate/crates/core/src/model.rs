//! Single-site measure, moments, Griffiths–Simon couplings, interaction
//! graphs, boundary profiles and the ModelSpec config format.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{gk15, integrate_adaptive, neumaier_sum};

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
pub const DEFAULT_IDENTITY_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ORDER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleSiteParams {
    pub g: f64,
    pub a: f64,
}

impl SingleSiteParams {
    pub fn new(g: f64, a: f64) -> Result<Self> {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::param("g", format!("must be positive and finite, got {g}")));
        }
        if !a.is_finite() {
            return Err(Error::param("a", "must be finite"));
        }
        Ok(SingleSiteParams { g, a })
    }

    /// log of the unnormalised single-site density at t.
    pub fn log_density(&self, t: f64) -> f64 {
        let t2 = t * t;
        -self.g * t2 * t2 - self.a * t2
    }
}

/// log of t^order·e^{−gt⁴−at²} at its maximiser over t ≥ 0.
fn log_peak(p: &SingleSiteParams, order: u32) -> f64 {
    let k = order as f64;
    let s = (-p.a + (p.a * p.a + 4.0 * p.g * k).sqrt()) / (4.0 * p.g);
    if s <= 0.0 {
        return 0.0;
    }
    0.5 * k * s.ln() - p.g * s * s - p.a * s
}

/// ∫_0^∞ t^order e^{−gt⁴−at²} dt · e^{−shift}, with its shift.
fn half_integral(p: &SingleSiteParams, order: u32, tol: f64) -> (f64, f64) {
    let shift = log_peak(p, order);
    let k = order as f64;
    let logf = |t: f64| {
        if t == 0.0 {
            if order == 0 {
                -shift
            } else {
                f64::NEG_INFINITY
            }
        } else {
            k * t.ln() + p.log_density(t) - shift
        }
    };
    let s_star = ((-p.a + (p.a * p.a + 4.0 * p.g * k).sqrt()) / (4.0 * p.g)).max(0.0);
    // Domain: beyond the peak the integrand falls below e^{−cut}, and the
    // quartic term dominates so the remaining tail is far smaller still.
    let cut = -(tol / 10.0).ln() + 40.0;
    let mut t_max = s_star.sqrt().max(1.0);
    while logf(t_max) > -cut || 4.0 * p.g * t_max.powi(4) + 2.0 * p.a * t_max * t_max < k + 1.0 {
        t_max *= 1.25;
    }
    let f = |t: f64| logf(t).exp();
    let panels = 64;
    let h = t_max / panels as f64;
    let rough = neumaier_sum((0..panels).map(|i| gk15(&f, i as f64 * h, (i + 1) as f64 * h).0));
    let v = integrate_adaptive(&f, 0.0, t_max, rough * tol * 1e-3);
    (v, shift)
}

/// Raw moment ⟨φ^order⟩₀ for any integer order (odd orders vanish).
pub fn raw_moment(params: &SingleSiteParams, order: u32, tol: f64) -> Result<f64> {
    if order % 2 == 1 {
        return Ok(0.0);
    }
    single_site_moment(params, order as i64, tol)
}

/// u[order] = ∫ t^order e^{−gt⁴−at²} dt / z_{g,a}.
pub fn single_site_moment(params: &SingleSiteParams, order: i64, tol: f64) -> Result<f64> {
    SingleSiteParams::new(params.g, params.a)?;
    if order < 0 || order % 2 != 0 {
        return Err(Error::Domain(format!("moment order must be even and ≥ 0, got {order}")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if order == 0 {
        return Ok(1.0);
    }
    let (num, sn) = half_integral(params, order as u32, tol);
    let (den, sd) = half_integral(params, 0, tol);
    Ok((sn - sd).exp() * num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub params: SingleSiteParams,
    /// u[k] = ⟨φ^{2k}⟩₀
    pub u: Vec<f64>,
    pub max_order: usize,
    pub tol: f64,
}

impl MomentTable {
    pub fn build(params: SingleSiteParams, max_order: usize, tol: f64) -> Result<Self> {
        SingleSiteParams::new(params.g, params.a)?;
        let max_order = max_order + max_order % 2;
        let mut u = Vec::with_capacity(max_order / 2 + 1);
        for k in 0..=max_order / 2 {
            u.push(single_site_moment(&params, 2 * k as i64, tol)?);
        }
        Ok(MomentTable { params, u, max_order, tol })
    }

    pub fn with_defaults(params: SingleSiteParams) -> Result<Self> {
        Self::build(params, DEFAULT_MAX_ORDER, DEFAULT_QUAD_TOL)
    }

    /// Extend in place so that `order` is housed.
    pub fn ensure(&mut self, order: usize) -> Result<()> {
        while self.max_order < order {
            let next = self.max_order + 2;
            self.u.push(single_site_moment(&self.params, next as i64, self.tol)?);
            self.max_order = next;
        }
        Ok(())
    }

    /// ⟨φ^order⟩₀, zero for odd orders.
    pub fn get(&self, order: usize) -> Result<f64> {
        if order % 2 == 1 {
            return Ok(0.0);
        }
        self.u
            .get(order / 2)
            .copied()
            .ok_or_else(|| Error::Range(format!("order {order} not housed (max {})", self.max_order)))
    }

    pub fn houses(&self, order: usize) -> bool {
        order <= self.max_order
    }

    /// max_k u[2k+2]/u[2k] over orders up to `max_order`.
    pub fn max_ratio_up_to(&self, max_order: usize) -> Result<f64> {
        if max_order > self.max_order || max_order < 2 {
            return Err(Error::Range(format!(
                "ratio range up to order {max_order} not certifiable from table (max {})",
                self.max_order
            )));
        }
        Ok((0..max_order / 2).map(|k| self.u[k + 1] / self.u[k]).fold(0.0, f64::max))
    }

    /// max_k u[2k]/u[2k+2} over the housed range.
    pub fn inverse_ratio_bound(&self) -> f64 {
        (0..self.u.len() - 1).map(|k| self.u[k] / self.u[k + 1]).fold(0.0, f64::max)
    }

    pub fn is_log_convex(&self) -> bool {
        (1..self.u.len().saturating_sub(1)).all(|k| self.u[k] * self.u[k] < self.u[k - 1] * self.u[k + 1])
    }
}

/// (2k+1)u[2k] − 2a·u[2k+2] − 4g·u[2k+4].
pub fn moment_recursion_residual(table: &MomentTable, k: usize) -> Result<f64> {
    if 2 * k + 4 > table.max_order {
        return Err(Error::Range(format!(
            "orders up to {} needed, table houses {}",
            2 * k + 4,
            table.max_order
        )));
    }
    let p = table.params;
    Ok((2 * k + 1) as f64 * table.u[k] - 2.0 * p.a * table.u[k + 1] - 4.0 * p.g * table.u[k + 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsParams {
    pub n: usize,
    pub g_tilde: f64,
    pub a_tilde: f64,
    pub c_n: f64,
    pub d_n: f64,
}

/// Griffiths–Simon constants for which c_N·Σ_j σ_j converges in law to ρ_{g,a}
/// when the block carries coupling d_N per unordered pair.
pub fn gs_couplings(params: &SingleSiteParams, n: usize) -> Result<GsParams> {
    SingleSiteParams::new(params.g, params.a)?;
    if n < 1 {
        return Err(Error::param("N", "must be at least 1"));
    }
    let g_tilde = (12.0 * params.g).powf(-0.25);
    let a_tilde = 2.0 * params.a * g_tilde * g_tilde;
    let nf = n as f64;
    Ok(GsParams {
        n,
        g_tilde,
        a_tilde,
        c_n: g_tilde * nf.powf(-0.75),
        d_n: (1.0 - a_tilde / nf.sqrt()) / nf,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub labels: Vec<String>,
    /// dense symmetric coupling matrix
    pub j: Vec<Vec<f64>>,
}

impl InteractionGraph {
    pub fn new(n: usize) -> Self {
        InteractionGraph {
            labels: (0..n).map(|i| i.to_string()).collect(),
            j: vec![vec![0.0; n]; n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut g = Self::new(n);
        for &(x, y, w) in edges {
            g.set(x, y, w);
        }
        g
    }

    pub fn path(n: usize, w: f64) -> Self {
        let e: Vec<_> = (1..n).map(|i| (i - 1, i, w)).collect();
        Self::from_edges(n, &e)
    }

    pub fn complete(n: usize, w: f64) -> Self {
        let mut e = Vec::new();
        for x in 0..n {
            for y in x + 1..n {
                e.push((x, y, w));
            }
        }
        Self::from_edges(n, &e)
    }

    pub fn set(&mut self, x: usize, y: usize, w: f64) {
        self.j[x][y] = w;
        self.j[y][x] = w;
    }

    pub fn len(&self) -> usize {
        self.j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j.is_empty()
    }

    /// Unordered pairs x<y with J ≠ 0, lexicographic.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for x in 0..self.len() {
            for y in x + 1..self.len() {
                if self.j[x][y] != 0.0 {
                    out.push((x, y, self.j[x][y]));
                }
            }
        }
        out
    }

    /// Induced subgraph on `keep` (in the given order).
    pub fn subgraph(&self, keep: &[usize]) -> InteractionGraph {
        InteractionGraph {
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
            j: keep.iter().map(|&x| keep.iter().map(|&y| self.j[x][y]).collect()).collect(),
        }
    }

    /// Graph distances from `origin` along the positive-J support.
    pub fn distances(&self, origin: usize) -> Vec<Option<usize>> {
        let n = self.len();
        let mut d = vec![None; n];
        let mut q = VecDeque::new();
        d[origin] = Some(0);
        q.push_back(origin);
        while let Some(x) = q.pop_front() {
            for y in 0..n {
                if y != x && self.j[x][y] > 0.0 && d[y].is_none() {
                    d[y] = Some(d[x].unwrap() + 1);
                    q.push_back(y);
                }
            }
        }
        d
    }

    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let d = self.distances(s);
            let comp: Vec<usize> = (0..n).filter(|&y| d[y].is_some()).collect();
            for &y in &comp {
                seen[y] = true;
            }
            out.push(comp);
        }
        out
    }

    pub fn max_coupling(&self) -> f64 {
        self.edges().iter().map(|e| e.2.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub symmetric: bool,
    pub zero_diagonal: bool,
    pub ferromagnetic: bool,
    pub irreducible: bool,
    pub components: Vec<Vec<usize>>,
    pub violations: Vec<String>,
    pub c2: String,
    pub c4: String,
}

pub fn validate_interaction(graph: &InteractionGraph) -> ValidationReport {
    let n = graph.len();
    let mut violations = Vec::new();
    let mut symmetric = true;
    let mut zero_diagonal = true;
    let mut ferro = true;
    for x in 0..n {
        if graph.j[x].len() != n {
            symmetric = false;
            violations.push(format!("row {x} has length {} (expected {n})", graph.j[x].len()));
            continue;
        }
        if graph.j[x][x] != 0.0 {
            zero_diagonal = false;
            violations.push(format!("nonzero diagonal J[{x}][{x}]"));
        }
        for y in 0..n {
            if graph.j[x][y] < 0.0 && x < y {
                ferro = false;
                violations.push(format!("C1: J[{x}][{y}] = {} < 0", graph.j[x][y]));
            }
            if x < y && graph.j[y].len() == n && graph.j[x][y] != graph.j[y][x] {
                symmetric = false;
                violations.push(format!("asymmetric pair ({x},{y})"));
            }
        }
    }
    let components = if symmetric { graph.components() } else { Vec::new() };
    let irreducible = symmetric && components.len() <= 1;
    if !irreducible && symmetric {
        violations.push(format!("C3: positive-J support has {} components", components.len()));
    }
    ValidationReport {
        valid: symmetric && zero_diagonal && ferro && irreducible,
        symmetric,
        zero_diagonal,
        ferromagnetic: ferro,
        irreducible,
        components,
        violations,
        c2: "not applicable".into(),
        c4: "not applicable".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryProfile {
    pub m: f64,
    pub origin: usize,
    pub values: Vec<f64>,
}

/// 𝔭_x = (M·log(d_G(o,x) ∨ 1))^{1/4}.
pub fn boundary_profile(m: f64, graph: &InteractionGraph, origin: usize) -> Result<BoundaryProfile> {
    if !(m > 0.0) {
        return Err(Error::param("M", "must be positive"));
    }
    if origin >= graph.len() {
        return Err(Error::param("origin", "out of range"));
    }
    let d = graph.distances(origin);
    let mut values = Vec::with_capacity(d.len());
    for (x, dx) in d.iter().enumerate() {
        let dx = dx.ok_or_else(|| Error::Distance(format!("vertex {x} unreachable from origin {origin}")))?;
        values.push(profile_value(m, dx));
    }
    Ok(BoundaryProfile { m, origin, values })
}

pub fn profile_value(m: f64, distance: usize) -> f64 {
    (m * (distance.max(1) as f64).ln()).powf(0.25)
}

/// Per-vertex external field: scalar or array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Scalar(f64),
    PerVertex(Vec<f64>),
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Scalar(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexSpec {
    Count(usize),
    Labels(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    /// vertices held fixed at the boundary value
    pub exterior: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<usize>,
    /// explicit η, one per listed exterior vertex
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub g: f64,
    pub a: f64,
    pub beta: f64,
    #[serde(default)]
    pub h: FieldSpec,
    pub vertices: VertexSpec,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySpec>,
}

/// A finite φ⁴ model: graph, single-site parameters, β and field.
#[derive(Debug, Clone, PartialEq)]
pub struct Phi4Model {
    pub graph: InteractionGraph,
    pub params: SingleSiteParams,
    pub beta: f64,
    pub h: Vec<f64>,
}

impl Phi4Model {
    pub fn new(graph: InteractionGraph, params: SingleSiteParams, beta: f64, h: Vec<f64>) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::param("beta", "must be nonnegative"));
        }
        if h.len() != graph.len() {
            return Err(Error::param("h", "length must equal vertex count"));
        }
        SingleSiteParams::new(params.g, params.a)?;
        Ok(Phi4Model { graph, params, beta, h })
    }

    pub fn zero_field(graph: InteractionGraph, params: SingleSiteParams, beta: f64) -> Result<Self> {
        let n = graph.len();
        Self::new(graph, params, beta, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }
}

impl ModelSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_vertices(&self) -> usize {
        match &self.vertices {
            VertexSpec::Count(n) => *n,
            VertexSpec::Labels(l) => l.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        SingleSiteParams::new(self.g, self.a)?;
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::param("beta", "must be nonnegative and finite"));
        }
        let n = self.n_vertices();
        if let FieldSpec::PerVertex(v) = &self.h {
            if v.len() != n {
                return Err(Error::param("h", format!("array length {} ≠ vertex count {n}", v.len())));
            }
        }
        for (k, &(x, y, _)) in self.edges.iter().enumerate() {
            if x >= n || y >= n || x == y {
                return Err(Error::param("edges", format!("edge {k} ({x},{y}) invalid")));
            }
        }
        if let Some(b) = &self.boundary {
            if b.exterior.iter().any(|&x| x >= n) {
                return Err(Error::param("boundary", "exterior vertex out of range"));
            }
            match (&b.values, b.profile_m) {
                (Some(v), _) if v.len() != b.exterior.len() => {
                    return Err(Error::param("boundary", "values length must match exterior"));
                }
                (None, None) => return Err(Error::param("boundary", "need profile_m or values")),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> InteractionGraph {
        let mut g = InteractionGraph::from_edges(self.n_vertices(), &self.edges);
        if let VertexSpec::Labels(l) = &self.vertices {
            g.labels = l.clone();
        }
        g
    }

    pub fn field(&self) -> Vec<f64> {
        match &self.h {
            FieldSpec::Scalar(h) => vec![*h; self.n_vertices()],
            FieldSpec::PerVertex(v) => v.clone(),
        }
    }

    /// Boundary values η on the exterior vertices (profile or explicit).
    pub fn boundary_values(&self) -> Result<Option<(Vec<usize>, Vec<f64>)>> {
        let Some(b) = &self.boundary else { return Ok(None) };
        let eta = match (&b.values, b.profile_m) {
            (Some(v), _) => v.clone(),
            (None, Some(m)) => {
                let prof = boundary_profile(m, &self.graph(), b.origin.unwrap_or(0))?;
                b.exterior.iter().map(|&x| prof.values[x]).collect()
            }
            (None, None) => return Err(Error::param("boundary", "need profile_m or values")),
        };
        Ok(Some((b.exterior.clone(), eta)))
    }

    /// The interior model with the boundary folded into the field.
    pub fn model(&self) -> Result<Phi4Model> {
        self.validate()?;
        let params = SingleSiteParams::new(self.g, self.a)?;
        let graph = self.graph();
        let h = self.field();
        match self.boundary_values()? {
            None => Phi4Model::new(graph, params, self.beta, h),
            Some((ext, eta)) => {
                let (g2, h2) = fold_boundary(&graph, &h, &ext, &eta);
                Phi4Model::new(g2, params, self.beta, h2)
            }
        }
    }
}

/// Remove exterior vertices and fold their values into the field:
/// h'_x = h_x + Σ_{y ∈ ext} J_{x,y} η_y.
pub fn fold_boundary(graph: &InteractionGraph, h: &[f64], exterior: &[usize], eta: &[f64]) -> (InteractionGraph, Vec<f64>) {
    let interior: Vec<usize> = (0..graph.len()).filter(|x| !exterior.contains(x)).collect();
    let h2 = interior
        .iter()
        .map(|&x| h[x] + exterior.iter().zip(eta).map(|(&y, &e)| graph.j[x][y] * e).sum::<f64>())
        .collect();
    (graph.subgraph(&interior), h2)
}
