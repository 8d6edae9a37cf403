//! Truncated double enumeration of the Ising switching identity
//! Σ_{∂n₁=S,∂n₂=T} w(n₁)w(n₂)F(n₁+n₂) = Σ_{∂n₁=SΔT,∂n₂=∅} w(n₁)w(n₂)F(n₁+n₂)1[ℱ_T].
//!
//! Both sides are sums over the total current m = n₁+n₂ with m_e ≤ cap. For a
//! fixed m, w(n₁)w(n₂) = Π K^m/m!·Π C(m_e, n₁_e), and the binomial sum over
//! splits with prescribed parities is counted from the parity patterns on the
//! support of m.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CouplingGraph;
use crate::error::{Error, Result};
use crate::numeric::Neumaier;
use crate::union_find::UnionFind;

pub const MAX_SWITCHING_EDGES: usize = 10;
pub const MAX_SWITCHING_STATES: u64 = 60_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurrentFunctional {
    One,
    Connects { u: usize, v: usize },
    TotalEven,
    EdgeOccupied { e: usize },
    Decay { lambda: f64 },
    DegreeAtMost { v: usize, k: u32 },
}

impl CurrentFunctional {
    pub fn sup_norm(&self) -> f64 {
        1.0
    }

    pub fn eval(&self, g: &CouplingGraph, m: &[u32]) -> f64 {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        match *self {
            CurrentFunctional::One => 1.0,
            CurrentFunctional::Connects { u, v } => {
                let mut uf = UnionFind::new(g.n);
                for (i, &(a, c, _)) in g.edges.iter().enumerate() {
                    if m[i] > 0 {
                        uf.union(a, c);
                    }
                }
                b(uf.connected(u, v))
            }
            CurrentFunctional::TotalEven => b(m.iter().sum::<u32>() % 2 == 0),
            CurrentFunctional::EdgeOccupied { e } => b(m.get(e).copied().unwrap_or(0) > 0),
            CurrentFunctional::Decay { lambda } => (-lambda * m.iter().sum::<u32>() as f64).exp(),
            CurrentFunctional::DegreeAtMost { v, k } => {
                let d: u32 = g.edges.iter().enumerate().filter(|(_, e)| e.0 == v || e.1 == v).map(|(i, _)| m[i]).sum();
                b(d <= k)
            }
        }
    }

    /// A member of the family drawn uniformly, with parameters in range for `g`.
    pub fn random<R: Rng>(g: &CouplingGraph, rng: &mut R) -> Self {
        match rng.random_range(0..6) {
            0 => CurrentFunctional::One,
            1 => CurrentFunctional::Connects {
                u: rng.random_range(0..g.n),
                v: rng.random_range(0..g.n),
            },
            2 => CurrentFunctional::TotalEven,
            3 => CurrentFunctional::EdgeOccupied {
                e: rng.random_range(0..g.n_edges().max(1)),
            },
            4 => CurrentFunctional::Decay {
                lambda: rng.random_range(0.0..1.0),
            },
            _ => CurrentFunctional::DegreeAtMost {
                v: rng.random_range(0..g.n),
                k: rng.random_range(0..4),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingResult {
    pub lhs: f64,
    pub rhs: f64,
    /// certified bound on the mass dropped by truncation, per side
    pub tail: f64,
    pub cap: u32,
    pub n_states: u64,
}

impl SwitchingResult {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

fn parity_mask(g: &CouplingGraph, set: &[usize]) -> Result<Vec<bool>> {
    let mut t = vec![false; g.n];
    for &s in set {
        if s >= g.n {
            return Err(Error::Contract(format!("vertex {s} not in graph")));
        }
        t[s] = !t[s];
    }
    Ok(t)
}

/// #{η ⊆ U : ∂η = target} for every support U ⊆ E.
fn pattern_counts(g: &CouplingGraph, target: &[bool]) -> Vec<u64> {
    let ne = g.n_edges();
    let tmask: u64 = (0..g.n).filter(|&v| target[v]).fold(0, |m, v| m | 1 << v);
    let tog: Vec<u64> = g.edges.iter().map(|&(u, v, _)| (1u64 << u) | (1u64 << v)).collect();
    let mut counts = vec![0u64; 1 << ne];
    for eta in 0u32..(1 << ne) {
        let b = (0..ne).filter(|&i| eta >> i & 1 == 1).fold(0u64, |m, i| m ^ tog[i]);
        if b != tmask {
            continue;
        }
        // every superset of η gains one
        let free = !eta & ((1u32 << ne) - 1);
        let mut sub = free;
        loop {
            counts[(eta | sub) as usize] += 1;
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
    }
    counts
}

/// every cluster of supp(m) holds an even number of T points
fn event_f(g: &CouplingGraph, m: &[u32], t: &[bool]) -> bool {
    let mut uf = UnionFind::new(g.n);
    for (i, &(a, b, _)) in g.edges.iter().enumerate() {
        if m[i] > 0 {
            uf.union(a, b);
        }
    }
    let mut par = vec![false; g.n];
    for v in 0..g.n {
        if t[v] {
            let r = uf.find(v);
            par[r] = !par[r];
        }
    }
    !par.iter().any(|&p| p)
}

pub fn ising_switching_check(g: &CouplingGraph, s: &[usize], t: &[usize], f: &CurrentFunctional, cap: u32, tol: f64) -> Result<SwitchingResult> {
    let ne = g.n_edges();
    if ne > MAX_SWITCHING_EDGES || g.n > 64 {
        return Err(Error::Capacity(format!("{ne} edges exceed {MAX_SWITCHING_EDGES}")));
    }
    let states = (cap as u64 + 1).checked_pow(ne as u32).unwrap_or(u64::MAX);
    if states > MAX_SWITCHING_STATES {
        return Err(Error::Capacity(format!("{states} truncated states exceed {MAX_SWITCHING_STATES}")));
    }
    let sm = parity_mask(g, s)?;
    let tm = parity_mask(g, t)?;
    let stm: Vec<bool> = sm.iter().zip(&tm).map(|(a, b)| a ^ b).collect();
    let count_s = pattern_counts(g, &sm);
    let count_st = pattern_counts(g, &stm);

    // Π (2K)^k/k! truncated and complete
    let mut full = 1.0;
    let mut kept = 1.0;
    for &(_, _, k) in &g.edges {
        full *= (2.0 * k).exp();
        let mut term = 1.0;
        let mut acc = 1.0;
        for j in 1..=cap {
            term *= 2.0 * k / j as f64;
            acc += term;
        }
        kept *= acc;
    }
    let tail = f.sup_norm() * (full - kept).max(0.0);
    if tail > tol {
        return Err(Error::Truncation { bound: tail, tol });
    }

    // per-edge factor K^k/k!·2^{k−1}
    let table: Vec<Vec<f64>> = g
        .edges
        .iter()
        .map(|&(_, _, k)| {
            let mut v = vec![1.0];
            let mut term = 1.0;
            for j in 1..=cap {
                term *= k / j as f64;
                v.push(term * 2f64.powi(j as i32 - 1));
            }
            v
        })
        .collect();
    let tog: Vec<u64> = g.edges.iter().map(|&(u, v, _)| (1u64 << u) | (1u64 << v)).collect();
    let target: u64 = (0..g.n).filter(|&v| stm[v]).fold(0, |m, v| m | 1 << v);

    let mut lhs = Neumaier::new();
    let mut rhs = Neumaier::new();
    let mut m = vec![0u32; ne];
    let mut n_states = 0u64;
    loop {
        n_states += 1;
        let mut boundary = 0u64;
        let mut support = 0usize;
        let mut w = 1.0;
        for i in 0..ne {
            if m[i] % 2 == 1 {
                boundary ^= tog[i];
            }
            if m[i] > 0 {
                support |= 1 << i;
            }
            w *= table[i][m[i] as usize];
        }
        if boundary == target && w > 0.0 {
            let cs = count_s[support];
            let cst = count_st[support];
            if cs > 0 || cst > 0 {
                let fv = f.eval(g, &m);
                if fv != 0.0 {
                    lhs.add(w * cs as f64 * fv);
                    if cst > 0 && event_f(g, &m, &tm) {
                        rhs.add(w * cst as f64 * fv);
                    }
                }
            }
        }
        let mut i = 0;
        while i < ne {
            m[i] += 1;
            if m[i] <= cap {
                break;
            }
            m[i] = 0;
            i += 1;
        }
        if i == ne {
            break;
        }
    }
    Ok(SwitchingResult {
        lhs: lhs.value(),
        rhs: rhs.value(),
        tail,
        cap,
        n_states,
    })
}
