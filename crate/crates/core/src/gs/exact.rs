//! Exhaustive enumerators: spin sums by Gray code and parity patterns of
//! Ising currents.

use rand::Rng;

use super::{CouplingGraph, IsingCurrent};
use crate::error::{Error, Result};
use crate::numeric::Neumaier;

pub const MAX_EXACT_SPINS: usize = 22;
pub const MAX_EXACT_EDGES: usize = 22;

/// μ[σ_S] for μ ∝ exp(Σ_e K_e σ_uσ_v) on the graph, with `pinned` (the ghost)
/// fixed to +1. Repeated entries of S cancel in pairs.
pub fn ising_correlation_exact(g: &CouplingGraph, pinned: Option<usize>, spins: &[usize]) -> Result<f64> {
    let free: Vec<usize> = (0..g.n).filter(|&v| Some(v) != pinned).collect();
    if free.len() > MAX_EXACT_SPINS {
        return Err(Error::Capacity(format!("{} free spins exceed {MAX_EXACT_SPINS}", free.len())));
    }
    let mut pos = vec![usize::MAX; g.n];
    for (i, &v) in free.iter().enumerate() {
        pos[v] = i;
    }
    let mut in_s = vec![false; g.n];
    for &s in spins {
        if s >= g.n {
            return Err(Error::Contract(format!("spin {s} not in graph")));
        }
        in_s[s] = !in_s[s];
    }
    let m = free.len();
    let mut k = vec![vec![0.0; m]; m];
    let mut field = vec![0.0; m];
    let mut e0 = 0.0;
    for &(u, v, c) in &g.edges {
        e0 += c.abs();
        match (pos.get(u).copied(), pos.get(v).copied()) {
            (Some(a), Some(b)) if a != usize::MAX && b != usize::MAX => {
                k[a][b] += c;
                k[b][a] += c;
            }
            (Some(a), _) if a != usize::MAX => field[a] += c,
            (_, Some(b)) if b != usize::MAX => field[b] += c,
            _ => {}
        }
    }
    // all spins +1 to start
    let mut sigma = vec![1.0f64; m];
    let mut local: Vec<f64> = (0..m).map(|i| k[i].iter().sum::<f64>() + field[i]).collect();
    let mut energy: f64 = g.edges.iter().map(|e| e.2).sum();
    let mut sign = 1.0;
    let mut z = Neumaier::new();
    let mut num = Neumaier::new();
    let mut add = |energy: f64, sign: f64| {
        let w = (energy - e0).exp();
        z.add(w);
        num.add(sign * w);
    };
    add(energy, sign);
    for step in 1u64..(1u64 << m) {
        let i = step.trailing_zeros() as usize;
        let old = sigma[i];
        energy -= 2.0 * old * local[i];
        sigma[i] = -old;
        for j in 0..m {
            local[j] -= 2.0 * old * k[j][i];
        }
        if in_s[free[i]] {
            sign = -sign;
        }
        add(energy, sign);
    }
    Ok(num.value() / z.value())
}

/// All parity patterns η ∈ {0,1}^E with ∂η = sources, weighted by
/// Π_e (cosh K_e if η_e = 0, sinh K_e if η_e = 1).
#[derive(Debug, Clone)]
pub struct ParityEnumeration {
    pub edges: Vec<(usize, usize, f64)>,
    pub patterns: Vec<u32>,
    pub weights: Vec<f64>,
    pub z: f64,
}

pub fn parity_pattern_exact(g: &CouplingGraph, sources: &[usize]) -> Result<ParityEnumeration> {
    let ne = g.n_edges();
    if ne > MAX_EXACT_EDGES {
        return Err(Error::Capacity(format!("{ne} edges exceed {MAX_EXACT_EDGES}")));
    }
    let mut target = vec![false; g.n];
    for &s in sources {
        if s >= g.n {
            return Err(Error::Contract(format!("source {s} not in graph")));
        }
        target[s] = !target[s];
    }
    // compact the touched vertices into bit positions
    let mut bit = vec![usize::MAX; g.n];
    let mut nb = 0;
    for &(u, v, _) in &g.edges {
        for w in [u, v] {
            if bit[w] == usize::MAX {
                bit[w] = nb;
                nb += 1;
            }
        }
    }
    let mut tmask: u64 = 0;
    for v in 0..g.n {
        if target[v] {
            if bit[v] == usize::MAX {
                // an isolated source can never be matched
                return Ok(ParityEnumeration {
                    edges: g.edges.clone(),
                    patterns: vec![],
                    weights: vec![],
                    z: 0.0,
                });
            }
            tmask |= 1 << bit[v];
        }
    }
    let toggles: Vec<u64> = g.edges.iter().map(|&(u, v, _)| (1u64 << bit[u]) | (1u64 << bit[v])).collect();
    let ch: Vec<f64> = g.edges.iter().map(|e| e.2.cosh()).collect();
    let sh: Vec<f64> = g.edges.iter().map(|e| e.2.sinh()).collect();
    let mut patterns = Vec::new();
    let mut weights = Vec::new();
    let mut z = Neumaier::new();
    let mut boundary = 0u64;
    let mut mask = 0u32;
    for step in 0u64..(1u64 << ne) {
        if step > 0 {
            let i = step.trailing_zeros() as usize;
            mask ^= 1 << i;
            boundary ^= toggles[i];
        }
        if boundary == tmask {
            let w: f64 = (0..ne).map(|i| if mask >> i & 1 == 1 { sh[i] } else { ch[i] }).product();
            if w > 0.0 {
                patterns.push(mask);
                weights.push(w);
                z.add(w);
            }
        }
    }
    Ok(ParityEnumeration {
        edges: g.edges.clone(),
        patterns,
        weights,
        z: z.value(),
    })
}

fn parity_term(k: f64, n: u32) -> f64 {
    (n as f64 * k.ln() - crate::numeric::ln_factorial(n as u64)).exp()
}

impl ParityEnumeration {
    pub fn partition_function(&self) -> f64 {
        self.z
    }

    /// P(n_e = value) under the current measure with the enumerated sources.
    pub fn edge_marginal(&self, e: usize, value: u32) -> f64 {
        let k = self.edges[e].2;
        let parity = value % 2;
        let term = if k == 0.0 {
            if value == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            parity_term(k, value)
        };
        let mut p = 0.0;
        for (mask, w) in self.patterns.iter().zip(&self.weights) {
            if mask >> e & 1 == parity {
                let norm = if parity == 1 { k.sinh() } else { k.cosh() };
                p += w / self.z * term / norm;
            }
        }
        p
    }

    /// Probability of each parity pattern.
    pub fn pattern_probabilities(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w / self.z).collect()
    }

    /// Exact draw: a pattern by weight, then each n_e from the
    /// parity-restricted series K^n/n!.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<IsingCurrent> {
        if self.patterns.is_empty() {
            return Err(Error::Ergodicity("no current has the requested sources".into()));
        }
        let u = rng.random_range(0.0..self.z);
        let mut acc = 0.0;
        let mut pick = self.patterns.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        let mask = self.patterns[pick];
        let values = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, &(_, _, k))| sample_parity_poisson(k, mask >> i & 1, rng))
            .collect();
        Ok(IsingCurrent { values })
    }
}

/// n ≡ parity drawn with probability ∝ K^n/n!.
pub fn sample_parity_poisson<R: Rng>(k: f64, parity: u32, rng: &mut R) -> u32 {
    if k == 0.0 {
        return 0;
    }
    let total = if parity == 1 { k.sinh() } else { k.cosh() };
    let mut u = rng.random_range(0.0..total);
    let mut n = parity;
    let mut term = if parity == 1 { k } else { 1.0 };
    loop {
        if u < term || n > 10_000 {
            return n;
        }
        u -= term;
        term *= k * k / ((n + 1) as f64 * (n + 2) as f64);
        n += 2;
    }
}
