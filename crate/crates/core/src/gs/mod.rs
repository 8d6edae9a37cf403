//! Griffiths–Simon Ising approximation of φ⁴: block graphs, Ising currents,
//! projection onto φ⁴ currents and the lift classes W₁, W₂.

pub mod exact;
pub mod magnet;
pub mod switching;
pub mod worm;

use serde::{Deserialize, Serialize};

use crate::currents::{Current, Moment};
use crate::error::{Error, Result};
use crate::model::{gs_couplings, GsParams, Phi4Model};
use crate::union_find::UnionFind;

pub use exact::{ising_correlation_exact, parity_pattern_exact, ParityEnumeration, MAX_EXACT_EDGES, MAX_EXACT_SPINS};
pub use magnet::{
    block_moment, block_moment_exact, block_spin_correlation, external_lift_count, leading_lift_count, renormalised_weight, switching_ratio_exact,
    RenormalisedWeight,
};
pub use switching::{ising_switching_check, CurrentFunctional, SwitchingResult};
pub use worm::{block_moment_worm, sample_current_worm, Worm};

/// Finite graph with nonnegative pair couplings K_e (already multiplied by β).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl CouplingGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for (i, &(u, v, k)) in edges.iter().enumerate() {
            if u >= n || v >= n || u == v {
                return Err(Error::Contract(format!("bad edge ({u},{v}) on {n} vertices")));
            }
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::param("K", format!("edge ({u},{v}) has coupling {k}")));
            }
            if k > 0.0 {
                adj[u].push((v, i));
                adj[v].push((u, i));
            }
        }
        Ok(CouplingGraph { n, edges, adj })
    }

    pub fn complete(n: usize, k: f64) -> Result<Self> {
        let mut e = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for u in 0..n {
            for v in u + 1..n {
                e.push((u, v, k));
            }
        }
        Self::new(n, e)
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Positive-coupling neighbours of v as (vertex, edge index).
    pub fn neighbours(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    /// Connected components through positive couplings.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.n);
        for &(u, v, k) in &self.edges {
            if k > 0.0 {
                uf.union(u, v);
            }
        }
        uf.labels()
    }
}

/// Integer current on the edges of a [`CouplingGraph`] (same indexing).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IsingCurrent {
    pub values: Vec<u32>,
}

impl IsingCurrent {
    pub fn zero(g: &CouplingGraph) -> Self {
        IsingCurrent {
            values: vec![0; g.n_edges()],
        }
    }

    pub fn degrees(&self, g: &CouplingGraph) -> Vec<u32> {
        let mut d = vec![0; g.n];
        for (i, &(u, v, _)) in g.edges.iter().enumerate() {
            d[u] += self.values[i];
            d[v] += self.values[i];
        }
        d
    }

    /// Vertices of odd degree.
    pub fn sources(&self, g: &CouplingGraph) -> Vec<usize> {
        self.degrees(g).iter().enumerate().filter(|(_, d)| *d % 2 == 1).map(|(i, _)| i).collect()
    }

    pub fn total(&self) -> u64 {
        self.values.iter().map(|&v| v as u64).sum()
    }

    pub fn plus(&self, other: &IsingCurrent) -> IsingCurrent {
        IsingCurrent {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    /// Union-find over the support of the current.
    pub fn clusters(&self, g: &CouplingGraph) -> UnionFind {
        let mut uf = UnionFind::new(g.n);
        for (i, &(u, v, _)) in g.edges.iter().enumerate() {
            if self.values[i] > 0 {
                uf.union(u, v);
            }
        }
        uf
    }

    /// log of Π K^n/n!
    pub fn log_weight(&self, g: &CouplingGraph) -> f64 {
        let mut s = 0.0;
        for (i, &(_, _, k)) in g.edges.iter().enumerate() {
            let n = self.values[i];
            if n > 0 {
                if k == 0.0 {
                    return f64::NEG_INFINITY;
                }
                s += n as f64 * k.ln() - crate::numeric::ln_factorial(n as u64);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeClass {
    Internal,
    External,
}

/// The GS graph Λ×K_N ∪ {𝔤} for a φ⁴ model. Spin (x,j) has index x·N + j
/// (j zero-based); the ghost is the last index.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGraph {
    pub model: Phi4Model,
    pub gs: GsParams,
}

pub const MAX_MATERIALISED_EDGES: usize = 4_000_000;

impl BlockGraph {
    pub fn new(model: &Phi4Model, n: usize) -> Result<Self> {
        let gs = gs_couplings(&model.params, n)?;
        if gs.d_n < 0.0 {
            return Err(Error::param(
                "N",
                format!("internal coupling d_N={} is negative; N must exceed ã²", gs.d_n),
            ));
        }
        if model.beta < 0.0 {
            return Err(Error::param("beta", "must be nonnegative"));
        }
        Ok(BlockGraph { model: model.clone(), gs })
    }

    pub fn n(&self) -> usize {
        self.gs.n
    }

    pub fn n_blocks(&self) -> usize {
        self.model.len()
    }

    pub fn n_spins(&self) -> usize {
        self.n_blocks() * self.n()
    }

    pub fn spin(&self, x: usize, j: usize) -> usize {
        x * self.n() + j
    }

    pub fn ghost(&self) -> usize {
        self.n_spins()
    }

    /// Block of a vertex; `None` for the ghost.
    pub fn block_of(&self, v: usize) -> Option<usize> {
        (v < self.n_spins()).then(|| v / self.n())
    }

    pub fn edge_class(&self, u: usize, v: usize) -> EdgeClass {
        match (self.block_of(u), self.block_of(v)) {
            (Some(a), Some(b)) if a == b => EdgeClass::Internal,
            _ => EdgeClass::External,
        }
    }

    /// β·c_N²·J_{xy}
    pub fn external_coupling(&self, x: usize, y: usize) -> f64 {
        self.model.beta * self.gs.c_n * self.gs.c_n * self.model.graph.j[x][y]
    }

    /// β·c_N·h_x
    pub fn ghost_coupling(&self, x: usize) -> f64 {
        self.model.beta * self.gs.c_n * self.model.h[x]
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        let lam = self.n_blocks();
        let ext = self.model.graph.edges().len() * n * n;
        let gh = self.model.h.iter().filter(|&&h| h != 0.0).count() * n;
        lam * n * (n - 1) / 2 + ext + gh
    }

    /// Materialise all edges: internal (coupling d_N) first, then
    /// inter-block, then ghost edges.
    pub fn coupling_graph(&self) -> Result<CouplingGraph> {
        let count = self.edge_count();
        if count > MAX_MATERIALISED_EDGES {
            return Err(Error::Capacity(format!("{count} GS edges exceed {MAX_MATERIALISED_EDGES}")));
        }
        let n = self.n();
        let mut e = Vec::with_capacity(count);
        for x in 0..self.n_blocks() {
            for i in 0..n {
                for j in i + 1..n {
                    e.push((self.spin(x, i), self.spin(x, j), self.gs.d_n));
                }
            }
        }
        for (x, y, _) in self.model.graph.edges() {
            let k = self.external_coupling(x, y);
            for i in 0..n {
                for j in 0..n {
                    e.push((self.spin(x, i), self.spin(y, j), k));
                }
            }
        }
        for x in 0..self.n_blocks() {
            if self.model.h[x] != 0.0 {
                let k = self.ghost_coupling(x);
                for i in 0..n {
                    e.push((self.spin(x, i), self.ghost(), k));
                }
            }
        }
        CouplingGraph::new(self.n_spins() + 1, e)
    }

    /// μ[σ_S] by exhaustive spin sum (≤ 22 spins).
    pub fn correlation_exact(&self, spins: &[usize]) -> Result<f64> {
        if self.n_spins() > MAX_EXACT_SPINS {
            return Err(Error::Capacity(format!("{} spins exceed {MAX_EXACT_SPINS}", self.n_spins())));
        }
        let g = self.coupling_graph()?;
        ising_correlation_exact(&g, Some(self.ghost()), spins)
    }
}

/// The fixed injection Ã = ∪_x {(x,1..A_x)}, B̃ = ∪_x {(x,A_x+1..A_x+B_x)}.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceInjection {
    pub a: Moment,
    pub b: Moment,
    pub n: usize,
}

impl SourceInjection {
    pub fn new(a: Moment, b: Moment, n: usize) -> Result<Self> {
        if a.x.len() != b.x.len() {
            return Err(Error::Contract("A and B live on different vertex sets".into()));
        }
        for (x, (&ax, &bx)) in a.x.iter().zip(&b.x).enumerate() {
            if (ax + bx) as usize > n {
                return Err(Error::param("N", format!("A_x+B_x={} at vertex {x} exceeds N={n}", ax + bx)));
            }
        }
        Ok(SourceInjection { a, b, n })
    }

    fn spins(&self, offset: impl Fn(usize) -> (u32, u32)) -> Vec<usize> {
        let mut v = Vec::new();
        for x in 0..self.a.x.len() {
            let (lo, len) = offset(x);
            for j in lo..lo + len {
                v.push(x * self.n + j as usize);
            }
        }
        v
    }

    pub fn a_tilde(&self) -> Vec<usize> {
        self.spins(|x| (0, self.a.x[x]))
    }

    pub fn b_tilde(&self) -> Vec<usize> {
        self.spins(|x| (self.a.x[x], self.b.x[x]))
    }
}

/// Θ_N: sum lifted values over block pairs (and block–ghost pairs), together
/// with the pushed-forward source counts A_x = |∂ñ ∩ B_{x,N}|.
pub fn project(bg: &BlockGraph, g: &CouplingGraph, tn: &IsingCurrent) -> (Current, Vec<u32>) {
    let lam = bg.n_blocks();
    let mut out = Current::zero(lam);
    for (i, &(u, v, _)) in g.edges.iter().enumerate() {
        let val = tn.values[i];
        if val == 0 {
            continue;
        }
        let bu = bg.block_of(u).unwrap_or(lam);
        let bv = bg.block_of(v).unwrap_or(lam);
        if bu != bv {
            out.add_to(bu, bv, val);
        }
    }
    let mut counts = vec![0u32; lam];
    for s in tn.sources(g) {
        if let Some(x) = bg.block_of(s) {
            counts[x] += 1;
        }
    }
    (out, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WClass {
    pub in_w1: bool,
    pub in_w2: bool,
}

/// W₁: no external edge at a source spin carries weight; W₂: every spin has
/// external degree at most one.
pub fn classify_w(bg: &BlockGraph, g: &CouplingGraph, tn: &IsingCurrent, sources: &[usize]) -> WClass {
    let mut ext = vec![0u32; g.n];
    for (i, &(u, v, _)) in g.edges.iter().enumerate() {
        if tn.values[i] > 0 && bg.edge_class(u, v) == EdgeClass::External {
            ext[u] += tn.values[i];
            ext[v] += tn.values[i];
        }
    }
    let in_w1 = sources.iter().all(|&s| ext[s] == 0);
    let in_w2 = (0..bg.n_spins()).all(|s| ext[s] <= 1);
    WClass { in_w1, in_w2 }
}
