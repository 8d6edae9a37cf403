//! Worm dynamics for Ising currents: two defects h, t random-walk over the
//! graph raising or lowering the values they cross, so the current always has
//! ∂n = S Δ {h,t}. States with h = t are currents with sources exactly S.

use std::collections::VecDeque;

use rand::Rng as _;

use super::{CouplingGraph, IsingCurrent};
use crate::error::{Error, Result};
use crate::model::{gs_couplings, SingleSiteParams};
use crate::rng::{rng_from_seed, Rng};
use crate::stats::{jackknife, EstimateWithError};

#[derive(Debug, Clone)]
pub struct Worm<'a> {
    g: &'a CouplingGraph,
    pub current: IsingCurrent,
    pub head: usize,
    pub tail: usize,
    in_base: Vec<bool>,
    rng: Rng,
}

fn bfs_path(g: &CouplingGraph, from: usize, to: usize) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; g.n];
    let mut q = VecDeque::new();
    prev[from] = from;
    q.push_back(from);
    while let Some(v) = q.pop_front() {
        if v == to {
            break;
        }
        for &(w, e) in g.neighbours(v) {
            if prev[w] == usize::MAX {
                prev[w] = e;
                q.push_back(w);
            }
        }
    }
    if prev[to] == usize::MAX {
        return None;
    }
    let mut edges = Vec::new();
    let mut v = to;
    while v != from {
        let e = prev[v];
        edges.push(e);
        let (a, b, _) = g.edges[e];
        v = if a == v { b } else { a };
    }
    Some(edges)
}

impl<'a> Worm<'a> {
    /// Start from a current with ∂n = S (repeated entries cancel). `sink`
    /// (usually the ghost) absorbs an odd source count in its component.
    pub fn new(g: &'a CouplingGraph, sources: &[usize], sink: Option<usize>, seed: u64) -> Result<Self> {
        let mut in_base = vec![false; g.n];
        for &s in sources {
            if s >= g.n {
                return Err(Error::Contract(format!("source {s} not in graph")));
            }
            in_base[s] = !in_base[s];
        }
        let labels = g.component_labels();
        let mut by_comp: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for v in 0..g.n {
            if in_base[v] {
                by_comp.entry(labels[v]).or_default().push(v);
            }
        }
        for (comp, list) in by_comp.iter_mut() {
            if list.len() % 2 == 1 {
                match sink {
                    Some(s) if labels[s] == *comp => {
                        list.push(s);
                        in_base[s] = !in_base[s];
                    }
                    _ => {
                        return Err(Error::Ergodicity(format!(
                            "source {} has no positive-coupling path to a partner",
                            list[0]
                        )))
                    }
                }
            }
        }
        let mut current = IsingCurrent::zero(g);
        for list in by_comp.values() {
            for pair in list.chunks(2) {
                let path = bfs_path(g, pair[0], pair[1]).ok_or_else(|| Error::Ergodicity("no path".into()))?;
                for e in path {
                    current.values[e] += 1;
                }
            }
        }
        let start = (0..g.n).find(|&v| !g.neighbours(v).is_empty()).unwrap_or(0);
        Ok(Worm {
            g,
            current,
            head: start,
            tail: start,
            in_base,
            rng: rng_from_seed(seed),
        })
    }

    pub fn at_rest(&self) -> bool {
        self.head == self.tail
    }

    pub fn base_sources(&self) -> Vec<usize> {
        (0..self.g.n).filter(|&v| self.in_base[v]).collect()
    }

    pub fn is_base_source(&self, v: usize) -> bool {
        self.in_base[v]
    }

    /// One Metropolis update; a resting worm is first relocated uniformly.
    pub fn step(&mut self) {
        if self.head == self.tail {
            let v = self.rng.random_range(0..self.g.n);
            self.head = v;
            self.tail = v;
        }
        let g = self.g;
        let move_head = self.rng.random_bool(0.5);
        let v = if move_head { self.head } else { self.tail };
        let nb = g.neighbours(v);
        if nb.is_empty() {
            return;
        }
        let (w, e) = nb[self.rng.random_range(0..nb.len())];
        let dv = nb.len() as f64;
        let dw = g.neighbours(w).len() as f64;
        let k = g.edges[e].2;
        let n = self.current.values[e];
        let increment = self.rng.random_bool(0.5);
        let ratio = if increment {
            k / (n as f64 + 1.0) * dv / dw
        } else {
            if n == 0 {
                return;
            }
            n as f64 / k * dv / dw
        };
        if ratio >= 1.0 || self.rng.random::<f64>() < ratio {
            if increment {
                self.current.values[e] += 1;
            } else {
                self.current.values[e] -= 1;
            }
            if move_head {
                self.head = w;
            } else {
                self.tail = w;
            }
        }
    }

    /// Advance through `visits` resting states (at least one update each).
    /// Subsampling by visit count keeps the law of the recorded currents
    /// equal to the stationary law restricted to resting states.
    pub fn next_rest(&mut self, visits: usize) -> &IsingCurrent {
        for _ in 0..visits.max(1) {
            self.step();
            while !self.at_rest() {
                self.step();
            }
        }
        &self.current
    }

    pub fn graph(&self) -> &CouplingGraph {
        self.g
    }
}

/// One current with ∂ñ = sources after `sweeps`·|V| resting visits.
pub fn sample_current_worm(g: &CouplingGraph, sources: &[usize], sink: Option<usize>, sweeps: usize, seed: u64) -> Result<IsingCurrent> {
    let mut w = Worm::new(g, sources, sink, seed)?;
    Ok(w.next_rest(sweeps * g.n).clone())
}

/// (c_N N)^p·μ⁰[σ₁⋯σ_p] from worm runs on K_N. Each factor
/// μ[σ_{2k}]/μ[σ_{2k−2}] comes from an independent chain with base sources
/// {1..2k−2}: P(h≠t, both outside S₀) / ((N−s)(N−s−1)/N · P(h=t)).
pub fn block_moment_worm(params: &SingleSiteParams, n: usize, p: usize, steps: usize, seed: u64) -> Result<EstimateWithError> {
    if n < p {
        return Err(Error::param("N", format!("N={n} is smaller than p={p}")));
    }
    if p % 2 == 1 {
        return Ok(EstimateWithError {
            value: 0.0,
            stderr: 0.0,
            n_samples: 0,
            seed,
        });
    }
    let gs = gs_couplings(params, n)?;
    let g = CouplingGraph::complete(n, gs.d_n)?;
    let mut value = 1.0;
    let mut rel_var = 0.0;
    let nb = 32;
    for k in 1..=p / 2 {
        let s0: Vec<usize> = (0..2 * k - 2).collect();
        let s = s0.len() as f64;
        let mut w = Worm::new(&g, &s0, None, crate::rng::derive_seed(seed, k as u64))?;
        for _ in 0..steps / 5 {
            w.step();
        }
        let per = steps / nb;
        let mut num = vec![0.0; nb];
        let mut den = vec![0.0; nb];
        for b in 0..nb {
            for _ in 0..per {
                w.step();
                if w.at_rest() {
                    den[b] += 1.0;
                } else if !w.is_base_source(w.head) && !w.is_base_source(w.tail) {
                    num[b] += 1.0;
                }
            }
        }
        let scale = (n as f64 - s) * (n as f64 - s - 1.0) / n as f64;
        let (r, se) = jackknife(&[num, den], |m| m[0] / (scale * m[1]));
        value *= r;
        rel_var += (se / r).powi(2);
    }
    let pref = (gs.c_n * n as f64).powi(p as i32);
    Ok(EstimateWithError {
        value: pref * value,
        stderr: pref * value * rel_var.sqrt(),
        n_samples: (steps * p / 2) as u64,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gs::exact::parity_pattern_exact;
    use crate::gs::magnet::block_moment_exact;

    #[test]
    fn detailed_balance_on_two_edges() {
        let g = CouplingGraph::new(3, vec![(0, 1, 0.7), (1, 2, 1.1)]).unwrap();
        let pe = parity_pattern_exact(&g, &[0, 2]).unwrap();
        let mut w = Worm::new(&g, &[0, 2], None, 11).unwrap();
        let mut hist = vec![[0u64; 6]; 2];
        let mut count = 0u64;
        for _ in 0..400_000 {
            let c = w.next_rest(1);
            for e in 0..2 {
                let v = c.values[e].min(5) as usize;
                hist[e][v] += 1;
            }
            count += 1;
        }
        for e in 0..2 {
            for v in 0..5u32 {
                let p = pe.edge_marginal(e, v);
                let f = hist[e][v as usize] as f64 / count as f64;
                let se = (p * (1.0 - p) / count as f64).sqrt().max(1e-4);
                // autocorrelation inflates the error; allow a generous band
                assert!((f - p).abs() < 8.0 * se + 2e-3, "edge {e} value {v}: {f} vs {p}");
            }
        }
    }

    #[test]
    fn sources_are_respected_and_runs_are_deterministic() {
        let g = CouplingGraph::new(2, vec![(0, 1, 0.5)]).unwrap();
        let mut w = Worm::new(&g, &[0, 1], None, 5).unwrap();
        for _ in 0..500 {
            let c = w.next_rest(3);
            assert_eq!(c.values[0] % 2, 1);
        }
        let a = sample_current_worm(&g, &[0, 1], None, 50, 77).unwrap();
        let b = sample_current_worm(&g, &[0, 1], None, 50, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unreachable_source_is_ergodicity_error() {
        let g = CouplingGraph::new(4, vec![(0, 1, 0.5), (2, 3, 0.5)]).unwrap();
        assert!(matches!(Worm::new(&g, &[0, 2], None, 1), Err(Error::Ergodicity(_))));
        assert!(Worm::new(&g, &[0, 1, 2, 3], None, 1).is_ok());
        assert!(matches!(Worm::new(&g, &[0], Some(3), 1), Err(Error::Ergodicity(_))));
        assert!(Worm::new(&g, &[0], Some(1), 1).is_ok());
    }

    #[test]
    fn k2_block_histogram_matches_parity_series() {
        let g = CouplingGraph::complete(2, 0.5).unwrap();
        let pe = parity_pattern_exact(&g, &[]).unwrap();
        let mut w = Worm::new(&g, &[], None, 3).unwrap();
        let mut hist = [0u64; 16];
        let m = 200_000;
        for _ in 0..m {
            let c = w.next_rest(1);
            hist[c.values[0].min(15) as usize] += 1;
        }
        for v in [0u32, 2] {
            let p = pe.edge_marginal(0, v);
            let f = hist[v as usize] as f64 / m as f64;
            assert!((f - p).abs() < 0.01, "{v}: {f} vs {p}");
        }
        assert_eq!((1..16).step_by(2).map(|i| hist[i]).sum::<u64>(), 0);
    }

    #[test]
    fn worm_block_moment_agrees_with_exact() {
        let p = SingleSiteParams::new(12.0, 0.0).unwrap();
        for (n, pp) in [(8usize, 2usize), (6, 4)] {
            let exact = block_moment_exact(&p, n, pp).unwrap() * (gs_couplings(&p, n).unwrap().c_n * n as f64).powi(pp as i32);
            let est = block_moment_worm(&p, n, pp, 2_000_000, 42).unwrap();
            assert!(
                (est.value - exact).abs() < 4.0 * est.stderr + 1e-3,
                "{n},{pp}: {} ± {} vs {exact}",
                est.value,
                est.stderr
            );
        }
    }
}
